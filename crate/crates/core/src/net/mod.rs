//! Dense kernels, the stacked LSTM, and its hand-derived backward pass.

mod dropout;
mod lstm;
mod matrix;
mod params;

pub use dropout::{sample_dropout_masks, sample_rng, DropoutMasks};
pub use lstm::{
    backward, cell_forward, forward, lstm_cell_forward, predict, CellCache, ForwardCache,
    StepCache,
};
pub use matrix::{matmul_nn_acc, matmul_nt_acc, matmul_tn_acc, Matrix};
pub use params::{
    init_params, param_count, DropoutSites, LstmLayerParams, NetConfig, StackedLstmParams,
    Weights, DEFAULT_DROPOUT, DEFAULT_HIDDEN, DEFAULT_LAYERS, GATE_ORDER,
};
