pub mod analytics;
pub mod pipeline;
pub mod protocol;
pub mod sim;
pub mod store;
pub mod time;
