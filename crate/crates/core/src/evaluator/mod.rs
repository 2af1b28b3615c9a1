//! The accuracy regressor: network, optimizer, training loop and model files.

pub mod mlp;
pub mod model_file;
pub mod optim;
pub mod train;

pub use mlp::{
    forward, forward_many, init_mlp, init_mlp_with, loss_and_grad, relu_margin, ForwardMode, MlpParams,
    HIDDEN_DIMS,
};
pub use model_file::{load_model, load_model_with_header, save_model, ModelHeader};
pub use optim::{cosine_lr, AdamW};
pub use train::{predict, train, EarlyStopping, Evaluator, Normalizer, TrainConfig, TrainReport};
