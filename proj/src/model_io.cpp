#include <bit>
#include <cstring>
#include <sstream>

#include "tcu/error.hpp"
#include "tcu/kv.hpp"
#include "tcu/nnir.hpp"

namespace tcu {

namespace {

constexpr const char* kMagic = "tcu-model";
constexpr int kVersion = 1;

std::string join_ints(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::int64_t> parse_ints(const std::string& s, const std::string& ctx) {
  std::vector<std::int64_t> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_int(part, ctx));
  return out;
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f64(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t{p[i]} << (8 * i);
  return std::bit_cast<double>(bits);
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> t;
  std::string w;
  while (in >> w) t.push_back(w);
  return t;
}

struct ParamDecl {
  std::string layer;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  int line = 0;
};

}  // namespace

void save_model(const ModelGraph& g, const std::filesystem::path& manifest) {
  validate_graph(g);
  std::filesystem::path blob = manifest;
  blob.replace_extension(".nnw");

  std::ostringstream m;
  m << kMagic << " " << kVersion << "\n";
  m << "name " << g.name << "\n";
  m << "input " << join_ints(g.input_shape.dims()) << "\n";
  m << "weights " << blob.filename().string() << "\n";
  for (const auto& l : g.layers) {
    m << "layer " << l.name << " " << kind_name(l.kind) << " in=";
    for (std::size_t i = 0; i < l.inputs.size(); ++i) m << (i ? "," : "") << l.inputs[i];
    if (!l.kernel.empty()) m << " kernel=" << join_ints(l.kernel);
    if (!l.stride.empty()) m << " stride=" << join_ints(l.stride);
    if (!l.kernel.empty()) {
      m << " padding=" << (l.padding == Padding::Same ? "same" : "valid");
    }
    if (l.filters) m << " filters=" << l.filters;
    if (l.units) m << " units=" << l.units;
    if (!l.target.empty()) m << " target=" << join_ints(l.target);
    m << "\n";
  }
  m << "output " << g.output << "\n";

  std::vector<std::uint8_t> bytes;
  for (const auto& l : g.layers) {
    if (!is_parameterized(l.kind)) continue;
    const auto& w = g.weights.at(l.name);
    m << "param " << l.name << " " << w.kernel.rows() << " " << w.kernel.cols() << "\n";
    for (Eigen::Index r = 0; r < w.kernel.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.kernel.cols(); ++c) put_f64(bytes, w.kernel(r, c));
    }
    for (Eigen::Index c = 0; c < w.bias.size(); ++c) put_f64(bytes, w.bias[c]);
  }
  write_text_file(manifest, m.str());
  write_binary_file(blob, bytes);
}

ModelGraph load_model(const std::filesystem::path& manifest) {
  const std::string text = read_text_file(manifest);
  const std::string src = manifest.string();
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  bool saw_magic = false;
  ModelGraph g;
  std::string blob_name;
  std::vector<ParamDecl> params;

  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const auto t = tokens(raw);
    if (t.empty()) continue;
    const std::string where = src + ":" + std::to_string(lineno);
    auto need = [&](std::size_t n) {
      if (t.size() != n) throw FormatError(where + ": malformed '" + t[0] + "' line");
    };
    if (!saw_magic) {
      if (t.size() != 2 || t[0] != kMagic || t[1] != std::to_string(kVersion)) {
        throw FormatError(where + ": expected '" + kMagic + " " +
                          std::to_string(kVersion) + "' header");
      }
      saw_magic = true;
      continue;
    }
    if (t[0] == "name") {
      need(2);
      g.name = t[1];
    } else if (t[0] == "input") {
      need(2);
      g.input_shape = TensorShape(parse_ints(t[1], where));
    } else if (t[0] == "weights") {
      need(2);
      blob_name = t[1];
    } else if (t[0] == "output") {
      need(2);
      g.output = t[1];
    } else if (t[0] == "param") {
      need(4);
      params.push_back({t[1], parse_int(t[2], where), parse_int(t[3], where), lineno});
    } else if (t[0] == "layer") {
      if (t.size() < 3) throw FormatError(where + ": malformed 'layer' line");
      const auto kind = kind_from_name(t[2]);
      if (!kind) {
        throw UnsupportedLayerError(t[1], where + ": layer '" + t[1] + "': unknown layer kind '" +
                                              t[2] + "'");
      }
      LayerSpec l;
      l.name = t[1];
      l.kind = *kind;
      for (std::size_t i = 3; i < t.size(); ++i) {
        const auto eq = t[i].find('=');
        if (eq == std::string::npos) {
          throw FormatError(where + ": expected key=value, got '" + t[i] + "'");
        }
        const std::string key = t[i].substr(0, eq);
        const std::string val = t[i].substr(eq + 1);
        if (key == "in") {
          l.inputs = split(val, ',');
        } else if (key == "kernel") {
          l.kernel = parse_ints(val, where);
        } else if (key == "stride") {
          l.stride = parse_ints(val, where);
        } else if (key == "padding") {
          if (val == "valid") l.padding = Padding::Valid;
          else if (val == "same") l.padding = Padding::Same;
          else throw FormatError(where + ": unknown padding '" + val + "'");
        } else if (key == "filters") {
          l.filters = parse_int(val, where);
        } else if (key == "units") {
          l.units = parse_int(val, where);
        } else if (key == "target") {
          l.target = parse_ints(val, where);
        } else {
          throw FormatError(where + ": unknown layer attribute '" + key + "'");
        }
      }
      g.layers.push_back(std::move(l));
    } else {
      throw FormatError(where + ": unknown directive '" + t[0] + "'");
    }
  }
  if (!saw_magic) throw FormatError(src + ": empty model manifest");

  std::vector<std::uint8_t> blob;
  if (!params.empty()) {
    if (blob_name.empty()) throw FormatError(src + ": missing 'weights' line");
    blob = read_binary_file(manifest.parent_path() / blob_name);
  }
  std::size_t off = 0;
  for (const auto& p : params) {
    const std::string where = src + ":" + std::to_string(p.line);
    const LayerSpec* l = g.find(p.layer);
    if (l == nullptr) throw FormatError(where + ": param for unknown layer '" + p.layer + "'");
    if (!is_parameterized(l->kind)) {
      throw FormatError(where + ": layer '" + p.layer + "' (" + kind_name(l->kind) +
                        ") takes no parameters");
    }
    if (p.rows < 1 || p.cols < 1) {
      throw FormatError(where + ": layer '" + p.layer + "' has empty parameters");
    }
    const auto count = static_cast<std::size_t>(p.rows * p.cols + p.cols);
    if (off + count * 8 > blob.size()) {
      throw FormatError(where + ": weight blob too short for layer '" + p.layer + "'");
    }
    LayerWeights w;
    w.kernel.resize(p.rows, p.cols);
    w.bias.resize(p.cols);
    for (std::int64_t r = 0; r < p.rows; ++r) {
      for (std::int64_t c = 0; c < p.cols; ++c, off += 8) w.kernel(r, c) = get_f64(&blob[off]);
    }
    for (std::int64_t c = 0; c < p.cols; ++c, off += 8) w.bias[c] = get_f64(&blob[off]);
    if (!g.weights.emplace(p.layer, std::move(w)).second) {
      throw FormatError(where + ": duplicate params for layer '" + p.layer + "'");
    }
  }
  if (off != blob.size()) {
    throw FormatError(src + ": weight blob has " + std::to_string(blob.size() - off) +
                      " trailing bytes");
  }
  validate_graph(g);
  return g;
}

}  // namespace tcu
