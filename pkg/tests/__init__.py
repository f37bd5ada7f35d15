"""Test suite for edat-lite."""
