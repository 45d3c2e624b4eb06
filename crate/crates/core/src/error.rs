use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("non-finite parameter update in `{group}` (key {key}): magnitude {magnitude}")]
    NonFiniteUpdate {
        group: &'static str,
        key: String,
        magnitude: f64,
    },

    #[error("environment returned non-finite reward {reward} at t = {t}")]
    NonFiniteReward { t: usize, reward: f64 },

    #[error("instance too large to enumerate: {leaves} leaves exceeds the limit of {limit}")]
    TooLarge { leaves: f64, limit: f64 },

    #[error("history {0} is not in the tree")]
    NotOnTree(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("episode {episode}: {source}")]
    Episode {
        episode: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn at_episode(self, episode: u64) -> Self {
        Error::Episode {
            episode,
            source: Box::new(self),
        }
    }
}
