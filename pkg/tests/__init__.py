"""Tests for cdinet package."""
