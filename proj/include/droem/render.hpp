#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "droem/dynamics.hpp"

// Lattice rasterization of the image state and partial dragging/masking.
//
// Pixel (px, py) of a W x H lattice sits at z = ((px - W/2) + i (H/2 - py)) / r
// with r = min(W, H) / 2, so the unit disk is inscribed in the grid and the
// imaginary axis points up the screen.

namespace droem::render {

struct Lattice {
  double delta_I = 0.0;
  double delta_O = 0.0;
  int width = 0;
  int height = 0;

  double radius() const { return std::min(width, height) / 2.0; }
  Complex to_complex(double px, double py) const;
  /// Exact inverse of to_complex up to rounding; returns (px, py).
  std::pair<double, double> to_pixel(Complex z) const;
};

/// RatioError unless delta_I >= 8 delta_O; DomainError for nonpositive sizes.
Lattice make_lattice(double delta_I, double delta_O, int width, int height);

struct Overcolor {
  std::string name;
  /// Row-major, one value per pixel per fiber, interleaved like intensities.
  std::vector<float> values;
};

struct Frame {
  double t = 0.0;
  int width = 0;
  int height = 0;
  int fibers = 1;
  /// Row-major, fiber-interleaved: index ((y * width + x) * fibers + f).
  std::vector<float> intensity;
  std::vector<Overcolor> overcolors;

  float& at(int x, int y, int f) { return intensity[(static_cast<std::size_t>(y) * width + x) * fibers + f]; }
  float at(int x, int y, int f) const { return intensity[(static_cast<std::size_t>(y) * width + x) * fibers + f]; }
};

/// |p(z)| inside the unit disk normalized by the frame maximum, zero outside.
/// The phase arg p(z) rides along as the overcolor channel "phase".
Frame rasterize_state(const dynamics::State& phi, const Lattice& lattice, double t = 0.0);

/// Unnormalized |p(z)| values, same layout as a single-fiber frame.
std::vector<double> raw_intensity(const dynamics::State& phi, const Lattice& lattice);

/// Copies a single-fiber frame into `fibers` identical fibers.
Frame replicate_fibers(const Frame& f, int fibers);

struct MaskSpec {
  enum class Kind { Constant, Gaussian, RaisedCosine, Table };
  Kind kind = Kind::Constant;
  /// Gaussian sigma, raised-cosine support radius, or the table's radial extent.
  double width = 1.0;
  /// Samples at r = k * width / (n - 1), linear in between, 0 beyond.
  std::vector<double> table;

  double operator()(double r) const;
  void validate() const;
};

struct FiberSpec {
  double gamma = 0.0;
  MaskSpec mask;

  /// DomainError unless gamma is in [0, 1] and the mask is valid.
  void validate() const;
};

enum class Sampling { Bilinear, Nearest };

/// out_f(x) = mask_f(|x - u|) in_f(x - gamma_f u), zero padding outside the
/// grid. ShapeError when the fiber count differs from the specs.
Frame drag_mask(const Frame& in, Complex u, const std::vector<FiberSpec>& fibers, const Lattice& lattice,
                Sampling sampling = Sampling::Bilinear);

struct Rgb {
  float r = 0, g = 0, b = 0;
};

struct Image {
  int width = 0;
  int height = 0;
  /// Row-major RGB triples, each channel clamped to [0, 1].
  std::vector<float> rgb;
};

/// Weighted sum of fiber intensities by palette color. PaletteSizeError when
/// the palette does not have one color per fiber.
Image compose_fibers(const Frame& frame, const std::vector<Rgb>& palette);

/// Wire form: {"type":"frame","t","w","h","fibers","encoding":"f32le","data",
/// "overcolors":[{"name","data"}]} with base64 little-endian float32 payloads.
nlohmann::json encode_frame(const Frame& f);
Frame decode_frame(const nlohmann::json& j);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

std::vector<std::uint8_t> float_bytes(const std::vector<float>& v);
std::vector<float> bytes_to_floats(const std::vector<std::uint8_t>& b);

}  // namespace droem::render
