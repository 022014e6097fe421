#include "droem/render.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

namespace droem::render {

Complex Lattice::to_complex(double px, double py) const {
  const double r = radius();
  return {(px - width / 2.0) / r, (height / 2.0 - py) / r};
}

std::pair<double, double> Lattice::to_pixel(Complex z) const {
  const double r = radius();
  return {z.real() * r + width / 2.0, height / 2.0 - z.imag() * r};
}

Lattice make_lattice(double delta_I, double delta_O, int width, int height) {
  if (!(delta_I > 0.0) || !(delta_O > 0.0)) throw DomainError("lattice steps must be positive");
  if (width < 2 || height < 2) throw DomainError("lattice needs at least 2x2 pixels");
  if (delta_I < 8.0 * delta_O)
    throw RatioError("image step " + std::to_string(delta_I) + " must be at least 8x the observation step " +
                     std::to_string(delta_O));
  return {delta_I, delta_O, width, height};
}

namespace {

Complex horner(const dynamics::State& phi, Complex z) {
  Complex acc = 0.0;
  for (auto it = phi.rbegin(); it != phi.rend(); ++it) acc = acc * z + *it;
  return acc;
}

}  // namespace

std::vector<double> raw_intensity(const dynamics::State& phi, const Lattice& lattice) {
  std::vector<double> out(static_cast<std::size_t>(lattice.width) * lattice.height, 0.0);
  for (int y = 0; y < lattice.height; ++y)
    for (int x = 0; x < lattice.width; ++x) {
      const Complex z = lattice.to_complex(x, y);
      if (std::norm(z) > 1.0) continue;
      out[static_cast<std::size_t>(y) * lattice.width + x] = std::abs(horner(phi, z));
    }
  return out;
}

Frame rasterize_state(const dynamics::State& phi, const Lattice& lattice, double t) {
  Frame f{t, lattice.width, lattice.height, 1, {}, {}};
  const std::size_t n = static_cast<std::size_t>(lattice.width) * lattice.height;
  f.intensity.assign(n, 0.0f);
  Overcolor phase{"phase", std::vector<float>(n, 0.0f)};
  std::vector<double> mag(n, 0.0);
  double peak = 0.0;
  for (int y = 0; y < lattice.height; ++y)
    for (int x = 0; x < lattice.width; ++x) {
      const Complex z = lattice.to_complex(x, y);
      if (std::norm(z) > 1.0) continue;
      const Complex p = horner(phi, z);
      const std::size_t k = static_cast<std::size_t>(y) * lattice.width + x;
      mag[k] = std::abs(p);
      phase.values[k] = static_cast<float>(std::arg(p));
      peak = std::max(peak, mag[k]);
    }
  if (peak > 0.0)
    for (std::size_t k = 0; k < n; ++k) f.intensity[k] = static_cast<float>(mag[k] / peak);
  f.overcolors.push_back(std::move(phase));
  return f;
}

Frame replicate_fibers(const Frame& f, int fibers) {
  if (f.fibers != 1) throw ShapeError("replicate_fibers needs a single-fiber frame");
  if (fibers < 1) throw DomainError("fiber count must be at least 1");
  Frame out{f.t, f.width, f.height, fibers, {}, {}};
  out.intensity.reserve(f.intensity.size() * fibers);
  for (float v : f.intensity) out.intensity.insert(out.intensity.end(), fibers, v);
  for (const auto& oc : f.overcolors) {
    Overcolor c{oc.name, {}};
    c.values.reserve(oc.values.size() * fibers);
    for (float v : oc.values) c.values.insert(c.values.end(), fibers, v);
    out.overcolors.push_back(std::move(c));
  }
  return out;
}

double MaskSpec::operator()(double r) const {
  switch (kind) {
    case Kind::Constant:
      return 1.0;
    case Kind::Gaussian:
      return std::exp(-r * r / (2.0 * width * width));
    case Kind::RaisedCosine:
      return r >= width ? 0.0 : 0.5 * (1.0 + std::cos(std::numbers::pi * r / width));
    case Kind::Table: {
      const double pos = r / width * static_cast<double>(table.size() - 1);
      if (pos >= static_cast<double>(table.size() - 1)) return r == width ? table.back() : 0.0;
      const auto k = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(k);
      return table[k] * (1.0 - frac) + table[k + 1] * frac;
    }
  }
  return 1.0;
}

void MaskSpec::validate() const {
  if (kind != Kind::Constant && !(width > 0.0)) throw DomainError("mask width must be positive");
  if (kind == Kind::Table) {
    if (table.size() < 2) throw DomainError("mask table needs at least 2 samples");
    if (table.front() != 1.0) throw DomainError("mask table must start at 1");
    for (double v : table)
      if (!(v >= 0.0)) throw DomainError("mask table must be nonnegative");
  }
}

void FiberSpec::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("dragging coefficient must lie in [0, 1]");
  mask.validate();
}

namespace {

float sample(const Frame& in, int f, double px, double py, Sampling mode) {
  auto get = [&](int x, int y) -> float {
    if (x < 0 || y < 0 || x >= in.width || y >= in.height) return 0.0f;
    return in.at(x, y, f);
  };
  if (mode == Sampling::Nearest) return get(static_cast<int>(std::lround(px)), static_cast<int>(std::lround(py)));
  const double fx = std::floor(px), fy = std::floor(py);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = px - fx, ay = py - fy;
  // integer positions skip the neighbours so identity sampling is exact
  if (ax == 0.0 && ay == 0.0) return get(x0, y0);
  const double top = get(x0, y0) * (1.0 - ax) + get(x0 + 1, y0) * ax;
  const double bottom = get(x0, y0 + 1) * (1.0 - ax) + get(x0 + 1, y0 + 1) * ax;
  return static_cast<float>(top * (1.0 - ay) + bottom * ay);
}

}  // namespace

Frame drag_mask(const Frame& in, Complex u, const std::vector<FiberSpec>& fibers, const Lattice& lattice,
                Sampling sampling) {
  if (static_cast<int>(fibers.size()) != in.fibers)
    throw ShapeError("frame has " + std::to_string(in.fibers) + " fibers but " + std::to_string(fibers.size()) +
                     " specs were given");
  if (in.width != lattice.width || in.height != lattice.height) throw ShapeError("frame and lattice sizes differ");
  for (const auto& fs : fibers) fs.validate();
  Frame out = in;
  const double r = lattice.radius();
  for (int f = 0; f < in.fibers; ++f) {
    const auto& spec = fibers[f];
    // the dragged lookup offset in pixels; y grows downward on screen
    const double ox = spec.gamma * u.real() * r;
    const double oy = -spec.gamma * u.imag() * r;
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        const double m = spec.mask(std::abs(lattice.to_complex(x, y) - u));
        const float v = sample(in, f, x - ox, y - oy, sampling);
        out.at(x, y, f) = spec.mask.kind == MaskSpec::Kind::Constant ? v : static_cast<float>(m * v);
      }
  }
  return out;
}

Image compose_fibers(const Frame& frame, const std::vector<Rgb>& palette) {
  if (static_cast<int>(palette.size()) != frame.fibers)
    throw PaletteSizeError("palette has " + std::to_string(palette.size()) + " colors for " +
                           std::to_string(frame.fibers) + " fibers");
  Image img{frame.width, frame.height, std::vector<float>(static_cast<std::size_t>(frame.width) * frame.height * 3)};
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x) {
      float r = 0, g = 0, b = 0;
      for (int f = 0; f < frame.fibers; ++f) {
        const float v = frame.at(x, y, f);
        r += v * palette[f].r;
        g += v * palette[f].g;
        b += v * palette[f].b;
      }
      const std::size_t k = (static_cast<std::size_t>(y) * frame.width + x) * 3;
      img.rgb[k] = std::clamp(r, 0.0f, 1.0f);
      img.rgb[k + 1] = std::clamp(g, 0.0f, 1.0f);
      img.rgb[k + 2] = std::clamp(b, 0.0f, 1.0f);
    }
  return img;
}

std::vector<std::uint8_t> float_bytes(const std::vector<float>& v) {
  std::vector<std::uint8_t> out(v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(v[i]);
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

std::vector<float> bytes_to_floats(const std::vector<std::uint8_t>& b) {
  if (b.size() % 4 != 0) throw ParseError("f32le payload length is not a multiple of 4");
  std::vector<float> out(b.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(b[i * 4 + k]) << (8 * k);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw ParseError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(text.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ParseError("invalid base64 payload");
  // EVP_DecodeBlock keeps the bytes that stand for '=' padding
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

nlohmann::json encode_frame(const Frame& f) {
  nlohmann::json oc = nlohmann::json::array();
  for (const auto& c : f.overcolors) oc.push_back({{"name", c.name}, {"data", base64_encode(float_bytes(c.values))}});
  return {{"type", "frame"},
          {"t", f.t},
          {"w", f.width},
          {"h", f.height},
          {"fibers", f.fibers},
          {"encoding", "f32le"},
          {"data", base64_encode(float_bytes(f.intensity))},
          {"overcolors", oc}};
}

Frame decode_frame(const nlohmann::json& j) {
  try {
    if (j.at("type") != "frame") throw ParseError("message is not a frame");
    if (j.at("encoding") != "f32le") throw ParseError("unsupported frame encoding");
    Frame f;
    f.t = j.at("t").get<double>();
    f.width = j.at("w").get<int>();
    f.height = j.at("h").get<int>();
    f.fibers = j.at("fibers").get<int>();
    f.intensity = bytes_to_floats(base64_decode(j.at("data").get<std::string>()));
    const std::size_t want = static_cast<std::size_t>(f.width) * f.height * f.fibers;
    if (f.width <= 0 || f.height <= 0 || f.fibers <= 0 || f.intensity.size() != want)
      throw ParseError("frame payload size does not match its header");
    if (j.contains("overcolors"))
      for (const auto& c : j.at("overcolors")) {
        Overcolor oc{c.at("name").get<std::string>(), bytes_to_floats(base64_decode(c.at("data").get<std::string>()))};
        if (oc.values.size() != want) throw ParseError("overcolor payload size does not match its header");
        f.overcolors.push_back(std::move(oc));
      }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed frame: ") + e.what());
  }
}

}  // namespace droem::render
