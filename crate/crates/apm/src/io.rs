//! JSON formats for bodies, point sets, and built structures.
