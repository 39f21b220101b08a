// C ABI surface; populated once the core crate is complete.
