pub mod error;
pub mod measurement;
pub mod noise;
pub mod qstate;
pub mod device;
pub mod characterize;
pub mod jsonl;
pub mod tomography;
pub mod router;
pub mod verify;
