"""Tests for normflux."""
