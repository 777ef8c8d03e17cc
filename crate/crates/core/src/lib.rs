//! Core of the Python-to-R tutor: lesson packs, lexers, transfer rules, the
//! session state machine and the study analytics. Everything here is pure
//! and synchronous; persistence and HTTP live in `tutor-service`.

pub mod analytics;
pub mod document;
pub mod knowledge;
pub mod lesson;
pub mod lexer;
pub mod session;
pub mod shipped;
pub mod shuffle;
pub mod source;

pub use document::LoadError;
pub use lesson::{load_pack, parse_pack, validate_pack, LessonPack};
pub use session::{LikertLevel, Phase, RenderState, Session, SessionError};
pub use source::{Language, Span};
