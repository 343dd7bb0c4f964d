"""Tests for oband-nli."""
