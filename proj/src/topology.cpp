#include "sqn/topology.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace sqn {

const char* kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "Conv";
    case LayerKind::kMaxpool: return "Maxpool";
    case LayerKind::kFire: return "Fire";
    case LayerKind::kAvgpool: return "Avgpool";
    case LayerKind::kSoftmax: return "Softmax";
  }
  return "?";
}

namespace {

LayerKind parse_kind(const std::string& s, int index) {
  if (s == "conv") return LayerKind::kConv;
  if (s == "maxpool") return LayerKind::kMaxpool;
  if (s == "fire") return LayerKind::kFire;
  if (s == "avgpool") return LayerKind::kAvgpool;
  if (s == "softmax") return LayerKind::kSoftmax;
  throw std::invalid_argument("topology: layer " + std::to_string(index) + ": unknown kind '" +
                              s + "'");
}

[[noreturn]] void fail(int index, const std::string& what) {
  throw std::invalid_argument("topology: layer " + std::to_string(index) + ": " + what);
}

int need(const std::map<std::string, int>& kv, const char* key, int index) {
  auto it = kv.find(key);
  if (it == kv.end()) fail(index, std::string("missing ") + key + "=");
  return it->second;
}

}  // namespace

NetworkDef compose_network(NetworkDef net) {
  int w = net.input_w, h = net.input_h, ch = net.input_ch;
  for (LayerSpec& layer : net.layers) {
    layer.in_w = w;
    layer.in_h = h;
    if (layer.kind == LayerKind::kConv || layer.kind == LayerKind::kMaxpool) {
      if (layer.kernel < 1 || layer.stride < 1 || layer.pad < 0)
        fail(layer.index, "kernel and stride must be >= 1, pad >= 0");
    }
    if (layer.kind == LayerKind::kConv && (layer.in_ch < 1 || layer.out_ch < 1))
      fail(layer.index, "channel counts must be positive");
    if (layer.kind == LayerKind::kFire &&
        (layer.in_ch < 1 || layer.squeeze < 1 || layer.expand1 < 1 || layer.expand3 < 1))
      fail(layer.index, "fire channel counts must be positive");
    switch (layer.kind) {
      case LayerKind::kConv: {
        if (layer.in_ch != ch)
          fail(layer.index, "declared in=" + std::to_string(layer.in_ch) +
                                " but incoming channels are " + std::to_string(ch));
        if (w + 2 * layer.pad < layer.kernel || h + 2 * layer.pad < layer.kernel)
          fail(layer.index, "kernel larger than padded input");
        w = (w + 2 * layer.pad - layer.kernel) / layer.stride + 1;
        h = (h + 2 * layer.pad - layer.kernel) / layer.stride + 1;
        ch = layer.out_ch;
        break;
      }
      case LayerKind::kMaxpool: {
        if (w < layer.kernel || h < layer.kernel) fail(layer.index, "kernel larger than input");
        w = (w - layer.kernel) / layer.stride + 1;
        h = (h - layer.kernel) / layer.stride + 1;
        layer.in_ch = layer.out_ch = ch;
        break;
      }
      case LayerKind::kFire: {
        if (layer.in_ch != ch)
          fail(layer.index, "declared in=" + std::to_string(layer.in_ch) +
                                " but incoming channels are " + std::to_string(ch));
        layer.out_ch = layer.expand1 + layer.expand3;
        ch = layer.out_ch;
        break;
      }
      case LayerKind::kAvgpool: {
        layer.in_ch = layer.out_ch = ch;
        w = 1;
        h = 1;
        break;
      }
      case LayerKind::kSoftmax: {
        if (w != 1 || h != 1) fail(layer.index, "softmax requires a 1x1 spatial input");
        if (ch != net.classes)
          fail(layer.index, "softmax input channels " + std::to_string(ch) +
                                " != class count " + std::to_string(net.classes));
        layer.in_ch = layer.out_ch = ch;
        break;
      }
    }
    layer.out_w = w;
    layer.out_h = h;
    if (w <= 0 || h <= 0) fail(layer.index, "output dims collapsed to zero");
  }
  return net;
}

NetworkDef parse_topology(const std::string& text) {
  NetworkDef net;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;

    if (word == "input") {
      if (!(ls >> net.input_w >> net.input_h >> net.input_ch))
        throw std::invalid_argument("topology: bad input line " + std::to_string(lineno));
    } else if (word == "classes") {
      if (!(ls >> net.classes))
        throw std::invalid_argument("topology: bad classes line " + std::to_string(lineno));
    } else if (word == "layer") {
      LayerSpec layer;
      std::string kind;
      if (!(ls >> layer.index >> layer.name >> kind))
        throw std::invalid_argument("topology: bad layer line " + std::to_string(lineno));
      layer.kind = parse_kind(kind, layer.index);

      std::map<std::string, int> kv;
      std::string pair;
      while (ls >> pair) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos) fail(layer.index, "expected key=value, got '" + pair + "'");
        kv[pair.substr(0, eq)] = std::stoi(pair.substr(eq + 1));
      }
      switch (layer.kind) {
        case LayerKind::kConv:
          layer.in_ch = need(kv, "in", layer.index);
          layer.out_ch = need(kv, "out", layer.index);
          layer.kernel = need(kv, "kernel", layer.index);
          layer.stride = need(kv, "stride", layer.index);
          layer.pad = need(kv, "pad", layer.index);
          break;
        case LayerKind::kMaxpool:
          layer.kernel = need(kv, "kernel", layer.index);
          layer.stride = need(kv, "stride", layer.index);
          break;
        case LayerKind::kFire:
          layer.in_ch = need(kv, "in", layer.index);
          layer.squeeze = need(kv, "squeeze", layer.index);
          layer.expand1 = need(kv, "expand1", layer.index);
          layer.expand3 = need(kv, "expand3", layer.index);
          break;
        case LayerKind::kAvgpool:
        case LayerKind::kSoftmax:
          break;
      }
      net.layers.push_back(layer);
    } else {
      throw std::invalid_argument("topology: unknown directive '" + word + "' on line " +
                                  std::to_string(lineno));
    }
  }

  if (net.input_w <= 0 || net.input_h <= 0 || net.input_ch <= 0)
    throw std::invalid_argument("topology: missing or bad input geometry");
  if (net.classes <= 0) throw std::invalid_argument("topology: missing class count");
  if (net.layers.empty()) throw std::invalid_argument("topology: no layers");
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (net.layers[i].index != static_cast<int>(i) + 1)
      throw std::invalid_argument("topology: layer indices must be 1..N in order, got " +
                                  std::to_string(net.layers[i].index) + " at position " +
                                  std::to_string(i + 1));
  return compose_network(std::move(net));
}

NetworkDef load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("topology: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_topology(buf.str());
}

bool is_v11_sequence(const NetworkDef& net) {
  using K = LayerKind;
  static const K want[15] = {K::kConv, K::kMaxpool, K::kFire,    K::kFire,   K::kMaxpool,
                             K::kFire, K::kFire,    K::kMaxpool, K::kFire,   K::kFire,
                             K::kFire, K::kFire,    K::kConv,    K::kAvgpool, K::kSoftmax};
  if (net.layers.size() != 15) return false;
  for (int i = 0; i < 15; ++i)
    if (net.layers[i].kind != want[i]) return false;
  return true;
}

NetworkDef build_v11_topology(const std::string& path) {
  NetworkDef net = load_topology(path);
  if (!is_v11_sequence(net))
    throw std::invalid_argument("topology: " + path + " is not the canonical 15-layer sequence");
  return net;
}

std::vector<std::string> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("labels: cannot open " + path);
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    labels.push_back(line);
  }
  while (!labels.empty() && labels.back().empty()) labels.pop_back();
  return labels;
}

}  // namespace sqn
