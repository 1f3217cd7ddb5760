mod acas_pipeline;
mod cli;
mod guarantees;
mod nnet_io;
