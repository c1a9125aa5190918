#include "scoreprop/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "scoreprop/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace scoreprop::io {

namespace {

constexpr const char* kModelMagic = "SPNMODEL";
constexpr int kModelVersion = 1;

std::string fmt_float(float v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

void append_floats(std::vector<std::uint8_t>& out, const std::vector<float>& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
  out.insert(out.end(), p, p + v.size() * sizeof(float));
}

std::size_t layer_param_count(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Conv2d:
      return static_cast<std::size_t>(spec.out_channels * spec.in_channels * spec.kernel.h *
                                      spec.kernel.w + spec.out_channels);
    case LayerKind::Linear:
      return static_cast<std::size_t>(spec.out_channels * spec.in_channels + spec.out_channels);
    case LayerKind::BatchNorm:
      return static_cast<std::size_t>(4 * spec.channels);
    default:
      return 0;
  }
}

}  // namespace

std::vector<std::uint8_t> encode_model(const ModelGraph& model) {
  std::ostringstream manifest;
  manifest << kModelMagic << " " << kModelVersion << "\n";
  manifest << "input";
  for (std::int64_t e : model.input_shape()) manifest << " " << e;
  manifest << "\n";

  std::vector<float> blob;
  for (std::int64_t l = 0; l < model.layer_count(); ++l) {
    const LayerSpec& s = model.spec(l);
    const LayerParams& p = model.params(l);
    manifest << "layer " << layer_kind_name(s.kind);
    switch (s.kind) {
      case LayerKind::Conv2d:
        manifest << " in=" << s.in_channels << " out=" << s.out_channels << " kh=" << s.kernel.h
                 << " kw=" << s.kernel.w << " sh=" << s.stride.h << " sw=" << s.stride.w
                 << " ph=" << s.pad.h << " pw=" << s.pad.w;
        blob.insert(blob.end(), p.weight.data.begin(), p.weight.data.end());
        blob.insert(blob.end(), p.bias.begin(), p.bias.end());
        break;
      case LayerKind::BatchNorm:
        manifest << " channels=" << s.channels << " eps=" << fmt_float(s.eps);
        blob.insert(blob.end(), p.gamma.begin(), p.gamma.end());
        blob.insert(blob.end(), p.beta.begin(), p.beta.end());
        blob.insert(blob.end(), p.mean.begin(), p.mean.end());
        blob.insert(blob.end(), p.var.begin(), p.var.end());
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        manifest << " kh=" << s.kernel.h << " kw=" << s.kernel.w << " sh=" << s.stride.h
                 << " sw=" << s.stride.w;
        break;
      case LayerKind::Linear:
        manifest << " in=" << s.in_channels << " out=" << s.out_channels;
        blob.insert(blob.end(), p.weight.data.begin(), p.weight.data.end());
        blob.insert(blob.end(), p.bias.begin(), p.bias.end());
        break;
      case LayerKind::Dropout:
        manifest << " d=" << fmt_float(s.dropout);
        break;
      case LayerKind::Relu:
      case LayerKind::Flatten:
        break;
    }
    manifest << "\n";
  }
  manifest << "blob " << blob.size() * sizeof(float) << "\n";

  const std::string head = manifest.str();
  std::vector<std::uint8_t> out(head.begin(), head.end());
  append_floats(out, blob);
  return out;
}

namespace {

class ManifestReader {
 public:
  explicit ManifestReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  // Next manifest line; the blob begins right after the "blob" line.
  std::string next_line() {
    std::string line;
    while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
      line.push_back(static_cast<char>(bytes_[pos_++]));
    }
    if (pos_ < bytes_.size()) ++pos_;  // consume newline
    return line;
  }
  bool at_end() const { return pos_ >= bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::int64_t parse_field(const std::string& token, const std::string& key, int layer_index) {
  if (token.rfind(key + "=", 0) != 0) {
    throw IoError("model manifest: layer " + std::to_string(layer_index) + ": expected " + key +
                  "=..., got '" + token + "'");
  }
  return std::stoll(token.substr(key.size() + 1));
}

float parse_field_f(const std::string& token, const std::string& key, int layer_index) {
  if (token.rfind(key + "=", 0) != 0) {
    throw IoError("model manifest: layer " + std::to_string(layer_index) + ": expected " + key +
                  "=..., got '" + token + "'");
  }
  return std::strtof(token.substr(key.size() + 1).c_str(), nullptr);
}

}  // namespace

ModelGraph decode_model(const std::vector<std::uint8_t>& bytes) {
  ManifestReader reader(bytes);

  {
    std::istringstream head(reader.next_line());
    std::string magic;
    int version = -1;
    head >> magic >> version;
    if (magic != kModelMagic) throw IoError("model file: bad magic '" + magic + "'");
    if (version != kModelVersion) {
      throw IoError("model file: unsupported version " + std::to_string(version));
    }
  }

  std::vector<std::int64_t> input_shape;
  {
    std::istringstream in(reader.next_line());
    std::string tag;
    in >> tag;
    if (tag != "input") throw IoError("model file: missing input shape line");
    std::int64_t e;
    while (in >> e) input_shape.push_back(e);
    if (input_shape.empty()) throw IoError("model file: empty input shape");
  }

  std::vector<LayerSpec> specs;
  std::size_t declared_bytes = 0;
  bool saw_blob = false;
  while (!reader.at_end()) {
    const std::string line = reader.next_line();
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string tag;
    in >> tag;
    if (tag == "blob") {
      in >> declared_bytes;
      saw_blob = true;
      break;
    }
    if (tag != "layer") throw IoError("model manifest: unexpected line '" + line + "'");
    std::string kind_name;
    in >> kind_name;
    const auto kind = layer_kind_from_name(kind_name);
    if (!kind) throw IoError("model manifest: unknown layer kind '" + kind_name + "'");
    const int idx = static_cast<int>(specs.size());

    std::vector<std::string> tokens;
    std::string t;
    while (in >> t) tokens.push_back(t);

    LayerSpec s;
    switch (*kind) {
      case LayerKind::Conv2d:
        if (tokens.size() != 8) throw IoError("model manifest: conv2d layer needs 8 fields");
        s = LayerSpec::conv2d(parse_field(tokens[0], "in", idx), parse_field(tokens[1], "out", idx),
                              HW{parse_field(tokens[2], "kh", idx), parse_field(tokens[3], "kw", idx)},
                              HW{parse_field(tokens[4], "sh", idx), parse_field(tokens[5], "sw", idx)},
                              HW{parse_field(tokens[6], "ph", idx), parse_field(tokens[7], "pw", idx)});
        break;
      case LayerKind::BatchNorm:
        if (tokens.size() != 2) throw IoError("model manifest: batchnorm layer needs 2 fields");
        s = LayerSpec::batchnorm(parse_field(tokens[0], "channels", idx),
                                 parse_field_f(tokens[1], "eps", idx));
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        if (tokens.size() != 4) throw IoError("model manifest: pool layer needs 4 fields");
        const HW k{parse_field(tokens[0], "kh", idx), parse_field(tokens[1], "kw", idx)};
        const HW st{parse_field(tokens[2], "sh", idx), parse_field(tokens[3], "sw", idx)};
        s = *kind == LayerKind::MaxPool ? LayerSpec::maxpool(k, st) : LayerSpec::avgpool(k, st);
        break;
      }
      case LayerKind::Linear:
        if (tokens.size() != 2) throw IoError("model manifest: linear layer needs 2 fields");
        s = LayerSpec::linear(parse_field(tokens[0], "in", idx), parse_field(tokens[1], "out", idx));
        break;
      case LayerKind::Dropout:
        if (tokens.size() != 1) throw IoError("model manifest: dropout layer needs 1 field");
        s = LayerSpec::dropout_layer(parse_field_f(tokens[0], "d", idx));
        break;
      case LayerKind::Relu:
        s = LayerSpec::relu();
        break;
      case LayerKind::Flatten:
        s = LayerSpec::flatten();
        break;
    }
    specs.push_back(s);
  }
  if (!saw_blob) throw IoError("model file: missing blob line");

  std::size_t expected = 0;
  for (const LayerSpec& s : specs) expected += layer_param_count(s);
  if (declared_bytes != expected * sizeof(float)) {
    throw IoError("model file: blob declares " + std::to_string(declared_bytes) +
                  " bytes but the manifest requires " + std::to_string(expected * sizeof(float)));
  }
  const std::size_t available = bytes.size() - reader.pos();
  if (available < declared_bytes) {
    throw IoError("model file: truncated blob (" + std::to_string(available) + " of " +
                  std::to_string(declared_bytes) + " bytes)");
  }
  if (available > declared_bytes) {
    throw IoError("model file: trailing bytes after blob");
  }

  const std::uint8_t* blob = bytes.data() + reader.pos();
  std::size_t off = 0;
  auto take = [&](std::size_t count) {
    std::vector<float> v(count);
    std::memcpy(v.data(), blob + off * sizeof(float), count * sizeof(float));
    off += count;
    return v;
  };

  std::vector<LayerParams> params;
  for (const LayerSpec& s : specs) {
    LayerParams p;
    switch (s.kind) {
      case LayerKind::Conv2d: {
        const std::vector<std::int64_t> wshape{s.out_channels, s.in_channels, s.kernel.h,
                                               s.kernel.w};
        p.weight = Tensor(wshape, take(static_cast<std::size_t>(numel(wshape))));
        p.bias = take(static_cast<std::size_t>(s.out_channels));
        break;
      }
      case LayerKind::Linear: {
        const std::vector<std::int64_t> wshape{s.out_channels, s.in_channels};
        p.weight = Tensor(wshape, take(static_cast<std::size_t>(numel(wshape))));
        p.bias = take(static_cast<std::size_t>(s.out_channels));
        break;
      }
      case LayerKind::BatchNorm: {
        const auto c = static_cast<std::size_t>(s.channels);
        p.gamma = take(c);
        p.beta = take(c);
        p.mean = take(c);
        p.var = take(c);
        break;
      }
      default:
        break;
    }
    params.push_back(std::move(p));
  }

  try {
    return ModelGraph(std::move(input_shape), std::move(specs), std::move(params));
  } catch (const ShapeError& e) {
    throw IoError(std::string("model file: ") + e.what());
  }
}

void save_model(const ModelGraph& model, const std::filesystem::path& path) {
  write_bytes(path, encode_model(model));
}

ModelGraph load_model(const std::filesystem::path& path) {
  return decode_model(read_bytes(path));
}

void save_scoremap(const Tensor& map, const std::filesystem::path& path) {
  Tensor chw = map;
  if (chw.rank() == 2) chw = Tensor({1, map.shape[0], map.shape[1]}, map.data);
  if (chw.rank() == 1) chw = Tensor({1, 1, map.shape[0]}, map.data);
  if (chw.rank() != 3) throw IoError("scoremap: rank " + std::to_string(map.rank()) +
                                     " not supported");
  std::vector<std::uint8_t> out{'S', 'M', 'A', 'P'};
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };
  put_u32(1);  // version
  put_u32(static_cast<std::uint32_t>(chw.shape[0]));
  put_u32(static_cast<std::uint32_t>(chw.shape[1]));
  put_u32(static_cast<std::uint32_t>(chw.shape[2]));
  append_floats(out, chw.data);
  write_bytes(path, out);
}

Tensor load_scoremap(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 20 || std::memcmp(bytes.data(), "SMAP", 4) != 0) {
    throw IoError("scoremap: bad magic in " + path.string());
  }
  auto get_u32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[off + i]) << (8 * i);
    return v;
  };
  const std::uint32_t version = get_u32(4);
  if (version != 1) throw IoError("scoremap: unsupported version " + std::to_string(version));
  const std::uint32_t c = get_u32(8);
  const std::uint32_t h = get_u32(12);
  const std::uint32_t w = get_u32(16);
  if (c == 0 || h == 0 || w == 0) throw IoError("scoremap: zero extent");
  const std::size_t count = static_cast<std::size_t>(c) * h * w;
  if (bytes.size() != 20 + count * sizeof(float)) {
    throw IoError("scoremap: payload length does not match extents");
  }
  std::vector<float> data(count);
  std::memcpy(data.data(), bytes.data() + 20, count * sizeof(float));
  return Tensor({c, h, w}, std::move(data));
}

namespace {

struct PnmHeader {
  bool color = false;
  std::int64_t w = 0, h = 0, maxval = 0;
  std::size_t payload_off = 0;
};

PnmHeader parse_pnm_header(const std::vector<std::uint8_t>& bytes) {
  PnmHeader hd;
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw IoError("image: not a binary PGM/PPM file");
  }
  hd.color = bytes[1] == '6';
  std::size_t pos = 2;
  auto next_token = [&]() -> std::int64_t {
    // Skip whitespace and '#' comment lines.
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::int64_t v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) throw IoError("image: malformed header");
    return v;
  };
  hd.w = next_token();
  hd.h = next_token();
  hd.maxval = next_token();
  if (hd.maxval != 255) throw IoError("image: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError("image: malformed header");
  hd.payload_off = pos + 1;  // single whitespace after maxval
  return hd;
}

}  // namespace

Tensor decode_image(const std::vector<std::uint8_t>& bytes) {
  const PnmHeader hd = parse_pnm_header(bytes);
  const std::int64_t channels = hd.color ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(hd.w * hd.h * channels);
  if (bytes.size() - hd.payload_off < need) {
    throw IoError("image: payload shorter than header promises");
  }
  Tensor out({channels, hd.h, hd.w});
  const std::uint8_t* p = bytes.data() + hd.payload_off;
  for (std::int64_t i = 0; i < hd.h * hd.w; ++i) {
    for (std::int64_t c = 0; c < channels; ++c) {
      out.data[static_cast<std::size_t>(c * hd.h * hd.w + i)] =
          static_cast<float>(p[i * channels + c]) / 255.0f;
    }
  }
  return out;
}

Tensor load_image(const std::filesystem::path& path) { return decode_image(read_bytes(path)); }

std::vector<std::uint8_t> encode_image(const Tensor& image) {
  if (image.rank() != 3 || (image.shape[0] != 1 && image.shape[0] != 3)) {
    throw ShapeError("encode_image: expected 1- or 3-channel CHW tensor, got " +
                     shape_str(image.shape));
  }
  const std::int64_t c = image.shape[0];
  const std::int64_t h = image.shape[1];
  const std::int64_t w = image.shape[2];
  const std::string head = std::string(c == 3 ? "P6" : "P5") + "\n" + std::to_string(w) + " " +
                           std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  for (std::int64_t i = 0; i < h * w; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double v = static_cast<double>(image.data[static_cast<std::size_t>(ch * h * w + i)]);
      const long long b = std::llround(std::clamp(v, 0.0, 1.0) * 255.0);
      out.push_back(static_cast<std::uint8_t>(b));
    }
  }
  return out;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open: " + path.string());
  const std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw IoError("read failed: " + path.string());
  return bytes;
}

namespace {

float bilinear_sample(const Tensor& img, std::int64_t c, double y, double x) {
  const std::int64_t h = img.shape[1];
  const std::int64_t w = img.shape[2];
  const double yc = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const double xc = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const std::int64_t y0 = static_cast<std::int64_t>(std::floor(yc));
  const std::int64_t x0 = static_cast<std::int64_t>(std::floor(xc));
  const std::int64_t y1 = std::min(y0 + 1, h - 1);
  const std::int64_t x1 = std::min(x0 + 1, w - 1);
  const double fy = yc - static_cast<double>(y0);
  const double fx = xc - static_cast<double>(x0);
  const double v00 = img.at3(c, y0, x0);
  const double v01 = img.at3(c, y0, x1);
  const double v10 = img.at3(c, y1, x0);
  const double v11 = img.at3(c, y1, x1);
  return static_cast<float>((1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                            fy * ((1.0 - fx) * v10 + fx * v11));
}

}  // namespace

Tensor preprocess_trim_resize(const Tensor& image, std::int64_t target, float threshold) {
  if (image.rank() != 3) {
    throw ShapeError("preprocess: expected CHW image, got " + shape_str(image.shape));
  }
  const std::int64_t c = image.shape[0];
  const std::int64_t h = image.shape[1];
  const std::int64_t w = image.shape[2];

  // Bounding box of pixels whose max channel exceeds the threshold.
  std::int64_t y0 = h, y1 = -1, x0 = w, x1 = -1;
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      float m = 0.0f;
      for (std::int64_t ch = 0; ch < c; ++ch) m = std::max(m, image.at3(ch, y, x));
      if (m > threshold) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
    }
  }
  if (y1 < 0) throw std::invalid_argument("preprocess: blank image (no pixel above threshold)");

  const std::int64_t ch_ = y1 - y0 + 1;
  const std::int64_t cw_ = x1 - x0 + 1;
  const std::int64_t side = std::max(ch_, cw_);
  // Symmetric zero padding to a square; odd slack goes to the bottom/right.
  const std::int64_t pad_y = (side - ch_) / 2;
  const std::int64_t pad_x = (side - cw_) / 2;

  Tensor square({c, side, side});
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t y = 0; y < ch_; ++y) {
      for (std::int64_t x = 0; x < cw_; ++x) {
        square.at3(ch, y + pad_y, x + pad_x) = image.at3(ch, y0 + y, x0 + x);
      }
    }
  }

  if (side == target) return square;

  Tensor out({c, target, target});
  const double scale = static_cast<double>(side) / static_cast<double>(target);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t y = 0; y < target; ++y) {
      const double sy = (static_cast<double>(y) + 0.5) * scale - 0.5;
      for (std::int64_t x = 0; x < target; ++x) {
        const double sx = (static_cast<double>(x) + 0.5) * scale - 0.5;
        out.at3(ch, y, x) = bilinear_sample(square, ch, sy, sx);
      }
    }
  }
  return out;
}

ModelGraph make_toy_model(std::uint32_t seed, int blocks,
                          const std::vector<std::int64_t>& channels, std::int64_t input_size) {
  if (blocks <= 0 || static_cast<std::size_t>(blocks) != channels.size()) {
    throw std::invalid_argument("make_toy_model: need one channel count per block");
  }
  std::int64_t spatial = input_size;
  for (int b = 0; b < blocks; ++b) {
    if (spatial % 2 != 0) {
      throw ShapeError("make_toy_model: input size " + std::to_string(input_size) +
                       " does not halve through " + std::to_string(blocks) + " blocks");
    }
    spatial /= 2;
  }
  if (spatial < 2) {
    throw ShapeError("make_toy_model: spatial extent collapses before the head");
  }

  std::vector<LayerSpec> specs;
  std::int64_t prev = 3;
  for (int b = 0; b < blocks; ++b) {
    const std::int64_t ch = channels[static_cast<std::size_t>(b)];
    for (int rep = 0; rep < 2; ++rep) {
      specs.push_back(LayerSpec::conv2d(prev, ch, HW{3, 3}, HW{1, 1}, HW{1, 1}));
      specs.push_back(LayerSpec::batchnorm(ch));
      specs.push_back(LayerSpec::relu());
      prev = ch;
    }
    specs.push_back(LayerSpec::maxpool(HW{2, 2}, HW{2, 2}));
  }
  specs.push_back(LayerSpec::conv2d(prev, prev, HW{2, 2}, HW{1, 1}, HW{0, 0}));
  specs.push_back(LayerSpec::batchnorm(prev));
  specs.push_back(LayerSpec::relu());
  const std::int64_t head = spatial - 1;  // 2x2 conv leaves head x head
  specs.push_back(LayerSpec::avgpool(HW{head, head}, HW{head, head}));
  specs.push_back(LayerSpec::flatten());
  specs.push_back(LayerSpec::linear(prev, 5));

  SeededParams src(seed);
  std::vector<LayerParams> params;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const LayerSpec& s = specs[l];
    LayerParams p;
    switch (s.kind) {
      case LayerKind::Conv2d: {
        const std::vector<std::int64_t> wshape{s.out_channels, s.in_channels, s.kernel.h,
                                               s.kernel.w};
        p.weight = Tensor(wshape, src.take(static_cast<int>(l), "weight", wshape));
        p.bias = src.take(static_cast<int>(l), "bias", {s.out_channels});
        break;
      }
      case LayerKind::Linear: {
        const std::vector<std::int64_t> wshape{s.out_channels, s.in_channels};
        p.weight = Tensor(wshape, src.take(static_cast<int>(l), "weight", wshape));
        p.bias = src.take(static_cast<int>(l), "bias", {s.out_channels});
        break;
      }
      case LayerKind::BatchNorm:
        p.gamma = src.take(static_cast<int>(l), "gamma", {s.channels});
        p.beta = src.take(static_cast<int>(l), "beta", {s.channels});
        p.mean = src.take(static_cast<int>(l), "mean", {s.channels});
        p.var = src.take(static_cast<int>(l), "var", {s.channels});
        break;
      default:
        break;
    }
    params.push_back(std::move(p));
  }
  return ModelGraph({3, input_size, input_size}, std::move(specs), std::move(params));
}

}  // namespace scoreprop::io
