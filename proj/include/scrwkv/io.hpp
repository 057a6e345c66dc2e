#pragma once

#include <filesystem>
#include <string>

#include "scrwkv/metrics.hpp"
#include "scrwkv/network.hpp"
#include "scrwkv/train.hpp"

namespace scrwkv {

namespace fs = std::filesystem;

inline constexpr const char* kCheckpointMagic = "SCRWKV-CKPT 1";

/// Checkpoint layout: a text manifest
///   SCRWKV-CKPT 1
///   config <model config JSON>
///   tensors <count>
///   <name> <f32|f64> <rank> <dims...> <offset> <bytes>   (one line per tensor)
///   end
/// followed by the little-endian payload; offsets are relative to the payload
/// start and contiguous in manifest order. Written to a temporary file and
/// renamed into place.
template <typename Scalar>
void save_checkpoint(const fs::path& path, const ModelConfig& cfg, const ParamStore<Scalar>& params);

ModelConfig read_checkpoint_config(const fs::path& path);

/// Loads every tensor into `params`. Rejects unknown names (listing them),
/// missing parameters, and shape or dtype mismatches (naming the tensor).
/// Returns the stored config.
template <typename Scalar>
ModelConfig load_checkpoint(const fs::path& path, ParamStore<Scalar>& params);

// PNG (8-bit gray/RGB/RGBA, any libpng-readable) or binary/ASCII PGM.
// Returns [3,H,W] in [0,1]; gray inputs are replicated.
Tensor<float> read_image(const fs::path& path);
// Single-channel [H,W] in [0,1]; colour inputs are averaged.
Tensor<float> read_gray(const fs::path& path);

// 8-bit grey image from [H,W] values in [0,1] (rounded); PNG unless the
// extension is .pgm.
void write_gray(const fs::path& path, const Tensor<float>& values);
// Pixels prob >= threshold become 255, others 0.
void write_mask(const fs::path& path, const Tensor<float>& probs, double threshold);

// Writes `content` through a temporary sibling file and a rename.
void write_file_atomic(const fs::path& path, const std::string& content);
std::string read_text_file(const fs::path& path);

bool is_image_file(const fs::path& path);
// Image files in a directory, sorted by name.
std::vector<fs::path> list_images(const fs::path& dir);

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or a directory
  Index samples = 8;
  Index size = 64;
  std::uint64_t seed = 42;
  SynthOptions synth;  // stroke widths and count for synthetic data
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  OptimConfig optim;
  DataConfig data;
  Index batch_size = 8;
  std::vector<double> thresholds = default_thresholds();
  std::string input_dir, output_dir;
};

// Keys: model, loss, optim, data, batch_size, thresholds, paths{input,output}.
// Missing sections keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const fs::path& path);

}  // namespace scrwkv
