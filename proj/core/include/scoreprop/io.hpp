#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scoreprop/model.hpp"
#include "scoreprop/tensor.hpp"

namespace scoreprop::io {

/// Model file: a UTF-8 manifest (version line, input shape, one line per
/// layer) directly followed by a `blob <nbytes>` line and a little-endian
/// float32 parameter stream in manifest order. load(save(m)) reproduces
/// the model bit-exactly and save(load(f)) reproduces the file bytes.
void save_model(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_model(const ModelGraph& model);
ModelGraph decode_model(const std::vector<std::uint8_t>& bytes);

/// Score-map file: magic "SMAP", u32 version, u32 extents C,H,W, then the
/// float32 payload row-major. All integers little-endian.
void save_scoremap(const Tensor& map, const std::filesystem::path& path);
Tensor load_scoremap(const std::filesystem::path& path);

/// Binary PPM (P6) / PGM (P5) with maxval 255; values scale to [0,1],
/// channels-first. Header comment lines are tolerated.
Tensor load_image(const std::filesystem::path& path);
Tensor decode_image(const std::vector<std::uint8_t>& bytes);

/// Encode a CHW tensor of [0,1] values as P5 (1 channel) or P6 (3
/// channels). decode_image followed by encode_image is byte-identical.
std::vector<std::uint8_t> encode_image(const Tensor& image);

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

/// Crop to the bounding box of pixels whose max channel exceeds
/// `threshold`, pad the shorter axis symmetrically with zeros to a square,
/// and bilinear-resize (half-pixel centers) to target x target.
Tensor preprocess_trim_resize(const Tensor& image, std::int64_t target = 640,
                              float threshold = 10.0f / 255.0f);

/// Seeded miniature of the DR architecture: per block two
/// conv3x3(s1,p1)+batchnorm+relu layers followed by a 2x2 max-pool, then a
/// 2x2 conv head, 4-ish average pool, flatten and a linear map to 5
/// classes. Same seed, same model.
ModelGraph make_toy_model(std::uint32_t seed, int blocks, const std::vector<std::int64_t>& channels,
                          std::int64_t input_size);

}  // namespace scoreprop::io
