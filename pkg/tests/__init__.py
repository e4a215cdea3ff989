"""Tests for the vehctl package."""
