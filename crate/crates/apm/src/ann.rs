//! Approximate nearest neighbor search on top of central ray shooting.
