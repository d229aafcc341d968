#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace onion {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& token, const std::string& message)
      : std::runtime_error("arch: " + message + " (token '" + token + "')"), token_(token) {}
  const std::string& token() const noexcept { return token_; }

 private:
  std::string token_;
};

enum class Variant { Monolithic, Sharing, NonSharing };

enum class LayerKind { Conv, ReLU, MaxPool, Flatten, Residual };

std::string_view to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view text);

// One entry of the layer list. For Conv and Residual entries n_s1 / n_s2 are
// the filter counts of the S1 and S2 halves of the pair (0 = absent in that
// stage). For monolithic specs n_s1 is 0 and n_s2 carries the width.
struct SplitLayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::size_t size = 1;  // filter size s, or pooling window
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t n_s1 = 0;
  std::size_t n_s2 = 0;
  bool s1_only = false;  // MaxPool applied in S1 only, before its final conv

  bool is_conv_like() const { return kind == LayerKind::Conv || kind == LayerKind::Residual; }
  bool operator==(const SplitLayerSpec&) const = default;
};

struct InputShape {
  std::size_t channels = 3;
  std::size_t height = 0;  // 0 = unspecified
  std::size_t width = 0;
  bool operator==(const InputShape&) const = default;
};

struct ArchSpec {
  std::vector<SplitLayerSpec> layers;
  Variant variant = Variant::Sharing;
  InputShape input;
  std::size_t s1_class_count = 0;
  std::size_t s2_class_count = 0;

  bool operator==(const ArchSpec&) const = default;

  std::size_t conv_count() const;
  // Number of conv-like layers each stage owns (d1, d2).
  std::size_t s1_depth() const;
  std::size_t s2_depth() const;
  bool has_residual() const;
};

// Grammar: comma-separated tokens, whitespace ignored.
//   @monolithic | @sharing | @non-sharing   optional leading variant tag
//   in=<c> | in=<c>x<h>x<w>                  optional input shape
//   [<k>x]C<s>(<n>|<a>/<b>|-/<b>|<a>/-)[s<stride>][p<pad>]
//   [<k>x]B<s>(...)[s<stride>]               residual basic block (cost model only)
//   P<w>[s<stride>]                          max-pool in both stages
//   P<w>[s<stride>](1/-)                     extra max-pool in S1 only
//   R                                        ReLU
//   F                                        flatten
// Without a tag the variant is Monolithic when no token uses the pair form
// and Sharing otherwise; in a sharing spec a single count C<s>(n) means (n/-).
ArchSpec parse_arch(std::string_view text);

// Validates invariants; throws ParseError naming the offending layer.
void validate(const ArchSpec& spec);

// Canonical text; parse_arch(to_text(s)) == s.
std::string to_text(const ArchSpec& spec);

struct ArchVariants {
  ArchSpec monolithic;
  ArchSpec sharing;
  ArchSpec non_sharing;
};

// From a sharing spec: the monolithic network with n_s1 + n_s2 filters per
// layer, and the non-sharing cascade whose S2 recomputes everything at those
// same monolithic widths. Requires a Sharing spec.
ArchVariants derive_variants(const ArchSpec& spec);

// Static shape trace of a spec. One entry per convolution executed, in order;
// a residual block contributes two or three entries.
struct ConvStage {
  std::size_t layer = 0;  // index into ArchSpec::layers
  std::size_t kernel = 1, stride = 1, pad = 0;
  std::size_t s1_in = 0, s1_out = 0;
  std::size_t s2_in_shared = 0;  // channels S2 reads from S1
  std::size_t s2_in_own = 0;     // channels S2 reads from its own maps
  std::size_t s2_out = 0;
  std::size_t s1_height = 0, s1_width = 0;  // S1 output spatial size
  std::size_t s2_height = 0, s2_width = 0;  // S2 output spatial size
  bool residual = false;
  bool s1_final = false;  // produces the S1 scores

  std::size_t s2_in() const { return s2_in_shared + s2_in_own; }
};

// Spatial sizes are propagated only when the input shape carries them
// (height/width > 0); otherwise the spatial fields stay 0 and specs with
// flatten layers are rejected.
std::vector<ConvStage> trace_stages(const ArchSpec& spec, const InputShape& input);
std::vector<ConvStage> trace_stages(const ArchSpec& spec);

}  // namespace onion
