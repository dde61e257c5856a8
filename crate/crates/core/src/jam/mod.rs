//! Live jam broker: clients send bars, the model answers with a perturbed
//! decode and both latents are tracked as a session trajectory.

mod protocol;
mod server;
mod session;

pub use protocol::{read_frame, read_frame_body, write_frame, JamMessage, MAX_FRAME_BYTES};
pub use server::{serve, Broker, Connection, JamClient, ServeConfig, ServerHandle};
pub use session::{embed3d, handle_bars, SessionState, Source, TrajectoryPoint, DEFAULT_STD};
