//! Minimal SVG rendering of planar builds.
