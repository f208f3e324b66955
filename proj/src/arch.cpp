#include "docstyle/arch.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "docstyle/error.hpp"

namespace docstyle {
namespace {

struct Token {
  std::string_view text;
  std::size_t index = 0;
  std::size_t offset = 0;
};

[[noreturn]] void syntax_error(const Token& t, const std::string& what) {
  throw ParseError("architecture syntax error at token " + std::to_string(t.index) +
                   " (offset " + std::to_string(t.offset) + ", '" + std::string(t.text) +
                   "'): " + what);
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '-') {
      out.push_back({text.substr(start, i - start), out.size(), start});
      start = i + 1;
    }
  }
  for (const auto& t : out) {
    if (t.text.empty()) {
      const bool trailing = t.offset == text.size();
      syntax_error(t, trailing ? "trailing separator" : "empty token");
    }
  }
  return out;
}

// Parses a positive decimal integer occupying all of s.
std::optional<std::size_t> parse_uint(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

struct ConvToken {
  Conv conv;
  bool explicit_stride = false;
  bool explicit_pad = false;
};

std::optional<ConvToken> parse_conv(const Token& t) {
  std::string_view s = t.text;
  ConvToken ct;
  std::optional<std::size_t> pad;
  std::optional<std::size_t> stride;
  if (auto plus = s.find('+'); plus != std::string_view::npos) {
    pad = parse_uint(s.substr(plus + 1));
    if (!pad) syntax_error(t, "bad padding");
    s = s.substr(0, plus);
  }
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    stride = parse_uint(s.substr(slash + 1));
    if (!stride || *stride == 0) syntax_error(t, "bad stride");
    s = s.substr(0, slash);
  }
  const auto parts = split(s, 'x');
  if (parts.size() != 3) return std::nullopt;
  auto kh = parse_uint(parts[0]);
  auto kw = parse_uint(parts[1]);
  auto oc = parse_uint(parts[2]);
  if (!kh || !kw || !oc || *kh == 0 || *kw == 0 || *oc == 0) {
    syntax_error(t, "convolution extents must be positive integers");
  }
  ct.conv = Conv{*kh, *kw, *oc, stride.value_or(1), pad.value_or(0)};
  ct.explicit_stride = stride.has_value();
  ct.explicit_pad = pad.has_value();
  return ct;
}

bool is_annotation(std::string_view s) {
  return s == "r" || s == "s" || (s.size() > 1 && (s[0] == 'p' || s[0] == 'd'));
}

std::string format_rate(double r) {
  std::ostringstream os;
  os.precision(17);
  os << r;
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    std::ostringstream t;
    t.precision(prec);
    t << r;
    if (std::stod(t.str()) == r) return t.str();
  }
  return os.str();
}

}  // namespace

ArchSpec parse_arch(std::string_view text, std::size_t n_classes) {
  if (n_classes < 1) throw InvalidArgument("parse_arch: n_classes must be >= 1");
  const auto tokens = tokenize(text);
  ArchSpec spec;
  spec.n_classes = n_classes;

  // Input token.
  {
    const Token& t = tokens[0];
    const auto parts = split(t.text, 'x');
    std::vector<std::size_t> v;
    for (auto p : parts) {
      auto x = parse_uint(p);
      if (!x || *x == 0) syntax_error(t, "input extents must be positive integers");
      v.push_back(*x);
    }
    if (v.size() == 1) {
      spec.input_channels = v[0];
    } else if (v.size() == 2 || v.size() == 3) {
      spec.input_height = v[0];
      spec.input_width = v[1];
      spec.input_channels = v.size() == 3 ? v[2] : 1;
    } else {
      syntax_error(t, "input must be HxW, HxWxC or D");
    }
  }
  if (tokens.size() < 2) {
    throw ParseError("architecture syntax error: no layers after the input token");
  }

  bool explicit_mode = false;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (is_annotation(tokens[i].text)) explicit_mode = true;
  }

  // Locate the classifier token: last token, or second to last before 's'.
  std::size_t last = tokens.size() - 1;
  bool has_softmax_token = false;
  if (tokens[last].text == "s") {
    has_softmax_token = true;
    if (last == 1) syntax_error(tokens[last], "softmax without a classifier layer");
    --last;
  }
  {
    const Token& t = tokens[last];
    if (t.text != "N") {
      auto u = parse_uint(t.text);
      if (!u) syntax_error(t, "architecture must end with the classifier token N");
      if (*u != n_classes) {
        syntax_error(t, "final layer has " + std::to_string(*u) + " units but n_classes is " +
                            std::to_string(n_classes));
      }
    }
  }

  if (explicit_mode) {
    for (std::size_t i = 1; i <= last; ++i) {
      const Token& t = tokens[i];
      const std::string_view s = t.text;
      if (s == "N") {
        if (i != last) syntax_error(t, "N may only appear as the final layer");
        spec.layers.emplace_back(FullyConnected{n_classes});
      } else if (s == "r") {
        spec.layers.emplace_back(Relu{});
      } else if (s == "s") {
        syntax_error(t, "softmax token may only appear last");
      } else if (s[0] == 'p') {
        const auto parts = split(s.substr(1), ':');
        if (parts.size() != 2) syntax_error(t, "pooling annotation must be pK:S");
        auto k = parse_uint(parts[0]);
        auto st = parse_uint(parts[1]);
        if (!k || !st || *k == 0 || *st == 0) syntax_error(t, "pooling size/stride must be >= 1");
        spec.layers.emplace_back(Pool{*k, *st});
      } else if (s[0] == 'd') {
        double rate = 0.0;
        auto [p, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), rate);
        if (ec != std::errc() || p != s.data() + s.size()) syntax_error(t, "bad dropout rate");
        if (!(rate >= 0.0 && rate < 1.0)) syntax_error(t, "dropout rate must be in [0, 1)");
        spec.layers.emplace_back(Dropout{rate});
      } else if (auto u = parse_uint(s)) {
        if (*u == 0) syntax_error(t, "fully-connected units must be >= 1");
        spec.layers.emplace_back(FullyConnected{*u});
      } else if (auto c = parse_conv(t)) {
        spec.layers.emplace_back(c->conv);
      } else {
        syntax_error(t, "unrecognized token");
      }
    }
  } else {
    std::vector<ConvToken> convs;
    std::vector<std::size_t> fcs;
    bool seen_fc = false;
    for (std::size_t i = 1; i < last; ++i) {
      const Token& t = tokens[i];
      if (t.text == "N") syntax_error(t, "N may only appear as the final layer");
      if (auto u = parse_uint(t.text)) {
        if (*u == 0) syntax_error(t, "fully-connected units must be >= 1");
        fcs.push_back(*u);
        seen_fc = true;
      } else if (auto c = parse_conv(t)) {
        if (seen_fc) syntax_error(t, "convolution after a fully-connected layer");
        convs.push_back(*c);
      } else {
        syntax_error(t, "unrecognized token");
      }
    }
    const std::size_t n_conv = convs.size();
    for (std::size_t i = 0; i < n_conv; ++i) {
      Conv c = convs[i].conv;
      if (!convs[i].explicit_stride) {
        c.stride = (i == 0 && std::max(c.kernel_h, c.kernel_w) >= 11) ? 4 : 1;
      }
      if (!convs[i].explicit_pad) {
        const bool odd = c.kernel_h % 2 == 1 && c.kernel_w % 2 == 1;
        c.pad = (c.stride == 1 && odd) ? (std::min(c.kernel_h, c.kernel_w) - 1) / 2 : 0;
      }
      spec.layers.emplace_back(c);
      spec.layers.emplace_back(Relu{});
      const bool pool = n_conv == 5 ? (i == 0 || i == 1 || i == 4) : true;
      if (pool) spec.layers.emplace_back(Pool{3, 2});
    }
    for (std::size_t j = 0; j < fcs.size(); ++j) {
      spec.layers.emplace_back(FullyConnected{fcs[j]});
      spec.layers.emplace_back(Relu{});
      if (j < 2) spec.layers.emplace_back(Dropout{0.5});
    }
    spec.layers.emplace_back(FullyConnected{n_classes});
  }
  spec.layers.emplace_back(Softmax{});
  (void)has_softmax_token;
  validate_arch(spec);
  return spec;
}

std::string render_arch(const ArchSpec& spec) {
  std::ostringstream os;
  if (spec.input_height == 1 && spec.input_width == 1) {
    os << spec.input_channels;
  } else {
    os << spec.input_height << 'x' << spec.input_width;
    if (spec.input_channels != 1) os << 'x' << spec.input_channels;
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const bool is_last_fc = i + 2 == spec.layers.size() && std::holds_alternative<FullyConnected>(l);
    os << '-';
    if (const auto* c = std::get_if<Conv>(&l)) {
      os << c->kernel_h << 'x' << c->kernel_w << 'x' << c->out_channels << '/' << c->stride << '+'
         << c->pad;
    } else if (const auto* p = std::get_if<Pool>(&l)) {
      os << 'p' << p->size << ':' << p->stride;
    } else if (std::holds_alternative<Relu>(l)) {
      os << 'r';
    } else if (const auto* d = std::get_if<Dropout>(&l)) {
      os << 'd' << format_rate(d->rate);
    } else if (const auto* f = std::get_if<FullyConnected>(&l)) {
      if (is_last_fc) {
        os << 'N';
      } else {
        os << f->units;
      }
    } else {
      os << 's';
    }
  }
  return os.str();
}

void validate_arch(const ArchSpec& spec) {
  if (spec.input_height < 1 || spec.input_width < 1 || spec.input_channels < 1) {
    throw InvalidArgument("architecture input extents must be >= 1");
  }
  if (spec.layers.size() < 2 || !std::holds_alternative<Softmax>(spec.layers.back())) {
    throw InvalidArgument("architecture must end with a softmax");
  }
  const auto* head = std::get_if<FullyConnected>(&spec.layers[spec.layers.size() - 2]);
  if (head == nullptr || head->units != spec.n_classes) {
    throw InvalidArgument("architecture must end with FullyConnected(" +
                          std::to_string(spec.n_classes) + ") + Softmax");
  }
  for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i) {
    if (std::holds_alternative<Softmax>(spec.layers[i])) {
      throw InvalidArgument("softmax may only be the final layer");
    }
  }
  (void)activation_shapes(spec);
}

std::vector<Shape> activation_shapes(const ArchSpec& spec) {
  std::vector<Shape> shapes;
  Shape s = spec.input_shape();
  const bool vector_input = spec.input_height == 1 && spec.input_width == 1;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const bool spatial = std::holds_alternative<Conv>(l) || std::holds_alternative<Pool>(l);
    if (spatial && (s.size() != 3 || (vector_input && i == 0))) {
      throw ShapeError("layer " + std::to_string(i) + " " + layer_name(l) +
                       " needs a spatial input, got " + shape_string(s));
    }
    if (std::holds_alternative<Softmax>(l) && s.size() != 1) s = {shape_size(s)};
    try {
      s = layer_output_shape(l, s);
    } catch (const ShapeError& e) {
      throw ShapeError("shape underflow at layer " + std::to_string(i) + ": " + e.what());
    }
    shapes.push_back(s);
  }
  return shapes;
}

std::size_t first_fc_index(const ArchSpec& spec) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (std::holds_alternative<FullyConnected>(spec.layers[i])) return i;
  }
  throw InvalidArgument("architecture has no fully-connected layer");
}

std::string arch_preset(std::string_view name) {
  if (name == "big") return "227x227-11x11x96-5x5x256-3x3x384-3x3x384-3x3x256-4096-4096-N";
  if (name == "small") return "150x150-36x36x20-8x8x50-1000-1000-N";
  if (name == "desk") return "64x64-15x15x20/2+7-5x5x50-1000-1000-N";
  if (name == "ensemble-head") return "3200-4096-N";
  throw InvalidArgument("unknown architecture preset '" + std::string(name) + "'");
}

std::vector<std::string> arch_preset_names() { return {"big", "small", "desk", "ensemble-head"}; }

}  // namespace docstyle
