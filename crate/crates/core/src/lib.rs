//! Consensus-free payments in grassroots cryptocurrencies.
//!
//! Every agent is the sovereign of its own currency and keeps a local
//! [`blocklace`](blocklace::Blocklace) of signed blocks. Payments, approvals and
//! friendship declarations are all blocks; correct agents only ever produce
//! the block forms checked by [`flashpay::validate_block`], and any safety
//! violation leaves signed evidence that [`flashpay::audit`] can find.

pub mod blocklace;
pub mod flashpay;
pub mod dissemination;
pub mod simnet;
pub mod cli;
