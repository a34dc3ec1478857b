pub mod bench;
pub mod crypto;
pub mod demo;
pub mod enclave;
pub mod encoding;
pub mod fixtures;
pub mod host;
pub mod ledger;
pub mod netsim;
