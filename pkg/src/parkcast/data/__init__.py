"""Bundled demo campus and generator configuration."""
