//! Framed JSON wire protocol and the server that speaks it.

pub mod codec;
pub mod server;

pub use codec::{
    decode, encode, frame, read_frame, write_frame, ClientMessage, Envelope, ServerMessage,
    SonificationInfo, Tagged, CLIENT_TAGS, MAX_FRAME_LEN, PROTOCOL_VERSION, SERVER_TAGS,
};
pub use server::{serve, Server, ServerConfig};
