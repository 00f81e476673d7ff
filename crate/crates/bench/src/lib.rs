pub use fragqite;
