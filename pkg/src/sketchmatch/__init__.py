"""Attribute-assisted sketch-to-photo face identification."""
