pub mod basis;
pub mod element;
pub mod linalg;
pub mod mesh;
pub mod problem;
pub mod assembly;
pub mod newton;
pub mod analysis;
