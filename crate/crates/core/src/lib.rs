//! Review-spam forensics over Yelp-style review corpora.
//!
//! The pipeline clusters users to find the popular ones, extracts the
//! businesses they reviewed, detects review spikes on those businesses,
//! scores reviews and businesses with empirical-CDF spam scores, and
//! quarantines popular users who leave repeated deceptive ratings on spiky
//! businesses.

pub mod clustering;
pub mod features;
pub mod ingest;
pub mod io_util;
pub mod pipeline;
pub mod plot;
pub mod quarantine;
pub mod rsd;
pub mod spamscore;
pub mod synthgen;
