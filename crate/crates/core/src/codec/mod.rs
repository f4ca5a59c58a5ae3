//! Extreme-low-bitrate image codec: an image becomes a quantized semantic
//! vector plus a quantized color map, and is decoded by sampling the
//! semantic-conditioned model under fine color guidance.

mod metrics;
mod pipeline;
mod semantic;
mod stream;

pub use metrics::{evaluate_pair, read_metrics_csv, write_metrics_csv, MetricRecord};
pub use pipeline::{read_stream, write_stream, CodecConfig, DecodeOptions, DecodedImage, Decoder, Encoder};
pub use semantic::{
    cosine, default_clamp, semantic_quantizer, ConditionalDenoiser, SemanticEmbedder, DEFAULT_SEMANTIC_DIM,
    DEFAULT_TEMPERATURE,
};
pub use stream::{EncodedImage, FORMAT_VERSION, HEADER_BITS, MAGIC};
