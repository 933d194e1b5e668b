"""Tests for trotterbridge."""
