"""Numerical toolkit for plane Hilbert geometries."""
