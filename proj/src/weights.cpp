#include "sqn/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <random>

namespace sqn {

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'N', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr int kMaxDim = 1 << 20;

std::uint8_t kind_tag(LayerKind k) { return static_cast<std::uint8_t>(k); }

LayerKind kind_from_tag(std::uint8_t tag) {
  if (tag > 4) throw WeightFileError(WeightFileError::Kind::kShapeMismatch,
                                     "weights: unknown layer kind tag " + std::to_string(tag));
  return static_cast<LayerKind>(tag);
}

struct Writer {
  std::vector<std::uint8_t> out;

  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u16(static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void raw(const std::int8_t* p, std::size_t n) {
    out.insert(out.end(), reinterpret_cast<const std::uint8_t*>(p),
               reinterpret_cast<const std::uint8_t*>(p) + n);
  }
};

struct Reader {
  const std::uint8_t* p;
  std::size_t left;

  void need(std::size_t n) {
    if (left < n)
      throw WeightFileError(WeightFileError::Kind::kTruncated, "weights: truncated file");
  }
  std::uint8_t u8() {
    need(1);
    --left;
    return *p++;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint16_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
  void raw(std::int8_t* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, p, n);
    p += n;
    left -= n;
  }
};

int checked_dim(std::int32_t v, const char* what) {
  if (v <= 0 || v > kMaxDim)
    throw WeightFileError(WeightFileError::Kind::kShapeMismatch,
                          std::string("weights: bad ") + what + " value " + std::to_string(v));
  return v;
}

void check_unit_against_layer(const LayerWeights& layer, std::size_t idx,
                              const ConvUnitWeights& u) {
  auto mismatch = [&](const std::string& what) {
    throw WeightFileError(WeightFileError::Kind::kShapeMismatch,
                          "weights: layer '" + layer.name + "' unit '" + u.name +
                              "': " + what);
  };
  if (layer.kind == LayerKind::kConv) {
    if (u.in_ch != layer.in_ch || u.out_ch != layer.out_ch || u.kernel != layer.kernel ||
        u.stride != layer.stride || u.pad != layer.pad)
      mismatch("conv unit dims disagree with layer dims");
  } else if (layer.kind == LayerKind::kFire) {
    switch (idx) {
      case 0:
        if (u.in_ch != layer.in_ch || u.out_ch != layer.squeeze || u.kernel != 1 ||
            u.stride != 1 || u.pad != 0)
          mismatch("squeeze unit dims disagree with layer dims");
        break;
      case 1:
        if (u.in_ch != layer.squeeze || u.out_ch != layer.expand1 || u.kernel != 1 ||
            u.stride != 1 || u.pad != 0)
          mismatch("expand1 unit dims disagree with layer dims");
        break;
      case 2:
        if (u.in_ch != layer.squeeze || u.out_ch != layer.expand3 || u.kernel != 3 ||
            u.stride != 1 || u.pad != 1)
          mismatch("expand3 unit dims disagree with layer dims");
        break;
      default:
        mismatch("fire layer with more than three units");
    }
  } else {
    mismatch("parameter unit on a layer without parameters");
  }
  if (u.f) {
    const auto& f = *u.f;
    if (f.out_ch != u.out_ch || f.in_ch != u.in_ch || f.kh != u.kernel || f.kw != u.kernel ||
        f.stride != u.stride || f.pad != u.pad ||
        f.weights.size() != static_cast<std::size_t>(u.out_ch) * u.in_ch * u.kernel * u.kernel ||
        f.bias.size() != static_cast<std::size_t>(u.out_ch))
      mismatch("float tensor shape disagrees with unit dims");
  }
  if (u.q) {
    const auto& q = *u.q;
    if (q.weights.out_ch != u.out_ch || q.weights.in_ch != u.in_ch ||
        q.weights.kh != u.kernel || q.weights.kw != u.kernel ||
        q.weights.size() != static_cast<std::size_t>(u.out_ch) * u.in_ch * u.kernel * u.kernel ||
        q.bias.size() != static_cast<std::size_t>(u.out_ch))
      mismatch("quantized tensor shape disagrees with unit dims");
  }
}

}  // namespace

WeightStore make_store_skeleton(const NetworkDef& net) {
  WeightStore store;
  for (const LayerSpec& l : net.layers) {
    LayerWeights lw;
    lw.kind = l.kind;
    lw.name = l.name;
    // only the fields the container serializes for this kind
    if (l.kind == LayerKind::kConv) {
      lw.in_ch = l.in_ch;
      lw.out_ch = l.out_ch;
      lw.kernel = l.kernel;
      lw.stride = l.stride;
      lw.pad = l.pad;
    } else if (l.kind == LayerKind::kMaxpool) {
      lw.kernel = l.kernel;
      lw.stride = l.stride;
    } else if (l.kind == LayerKind::kFire) {
      lw.in_ch = l.in_ch;
      lw.squeeze = l.squeeze;
      lw.expand1 = l.expand1;
      lw.expand3 = l.expand3;
    }
    if (l.kind == LayerKind::kConv) {
      lw.units.push_back(
          {l.name, l.out_ch, l.in_ch, l.kernel, l.stride, l.pad, std::nullopt, std::nullopt});
    } else if (l.kind == LayerKind::kFire) {
      lw.units.push_back(
          {l.name + ".squeeze", l.squeeze, l.in_ch, 1, 1, 0, std::nullopt, std::nullopt});
      lw.units.push_back(
          {l.name + ".expand1", l.expand1, l.squeeze, 1, 1, 0, std::nullopt, std::nullopt});
      lw.units.push_back(
          {l.name + ".expand3", l.expand3, l.squeeze, 3, 1, 1, std::nullopt, std::nullopt});
    }
    store.layers.push_back(std::move(lw));
  }
  return store;
}

void validate_store(const WeightStore& store, const NetworkDef& net) {
  if (store.layers.size() != net.layers.size())
    throw WeightFileError(WeightFileError::Kind::kShapeMismatch,
                          "weights: store has " + std::to_string(store.layers.size()) +
                              " layers, topology has " + std::to_string(net.layers.size()));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    const LayerWeights& lw = store.layers[i];
    bool ok = lw.kind == l.kind;
    if (ok && l.kind == LayerKind::kConv)
      ok = lw.in_ch == l.in_ch && lw.out_ch == l.out_ch && lw.kernel == l.kernel &&
           lw.stride == l.stride && lw.pad == l.pad;
    else if (ok && l.kind == LayerKind::kMaxpool)
      ok = lw.kernel == l.kernel && lw.stride == l.stride;
    else if (ok && l.kind == LayerKind::kFire)
      ok = lw.in_ch == l.in_ch && lw.squeeze == l.squeeze && lw.expand1 == l.expand1 &&
           lw.expand3 == l.expand3;
    if (!ok)
      throw WeightFileError(WeightFileError::Kind::kShapeMismatch,
                            "weights: layer " + std::to_string(l.index) +
                                " dims disagree with the topology");
    for (std::size_t u = 0; u < lw.units.size(); ++u)
      check_unit_against_layer(lw, u, lw.units[u]);
  }
}

std::vector<std::uint8_t> save_weights_bytes(const WeightStore& store) {
  Writer w;
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(store.layers.size()));
  for (const LayerWeights& layer : store.layers) {
    w.str(layer.name);
    w.u8(kind_tag(layer.kind));
    switch (layer.kind) {
      case LayerKind::kConv:
        w.i32(layer.in_ch);
        w.i32(layer.out_ch);
        w.i32(layer.kernel);
        w.i32(layer.stride);
        w.i32(layer.pad);
        break;
      case LayerKind::kMaxpool:
        w.i32(layer.kernel);
        w.i32(layer.stride);
        break;
      case LayerKind::kFire:
        w.i32(layer.in_ch);
        w.i32(layer.squeeze);
        w.i32(layer.expand1);
        w.i32(layer.expand3);
        break;
      case LayerKind::kAvgpool:
      case LayerKind::kSoftmax:
        break;
    }
    w.u8(static_cast<std::uint8_t>(layer.units.size()));
    for (const ConvUnitWeights& u : layer.units) {
      w.str(u.name);
      w.i32(u.out_ch);
      w.i32(u.in_ch);
      w.i32(u.kernel);
      w.i32(u.stride);
      w.i32(u.pad);
      const std::uint8_t flags =
          (u.f ? 1 : 0) | (u.q ? 2 : 0);
      w.u8(flags);
      if (u.f) {
        for (float v : u.f->weights) w.f32(v);
        for (float v : u.f->bias) w.f32(v);
      }
      if (u.q) {
        w.i16(static_cast<std::int16_t>(u.q->qspec.weight_fmt.frac_bits));
        w.i16(static_cast<std::int16_t>(u.q->qspec.bias_fmt.frac_bits));
        w.i16(static_cast<std::int16_t>(u.q->qspec.input_fmt.frac_bits));
        w.i16(static_cast<std::int16_t>(u.q->qspec.output_fmt.frac_bits));
        w.raw(u.q->weights.data.data(), u.q->weights.data.size());
        w.raw(u.q->bias.data(), u.q->bias.size());
      }
    }
  }
  return std::move(w.out);
}

WeightStore load_weights_bytes(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes.data(), bytes.size()};
  r.need(4);
  if (std::memcmp(r.p, kMagic, 4) != 0)
    throw WeightFileError(WeightFileError::Kind::kBadMagic, "weights: bad magic");
  r.p += 4;
  r.left -= 4;
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw WeightFileError(WeightFileError::Kind::kBadVersion,
                          "weights: unsupported format version " + std::to_string(version));
  const std::uint32_t layer_count = r.u32();
  if (layer_count == 0 || layer_count > 10000)
    throw WeightFileError(WeightFileError::Kind::kShapeMismatch,
                          "weights: implausible layer count " + std::to_string(layer_count));

  WeightStore store;
  for (std::uint32_t li = 0; li < layer_count; ++li) {
    LayerWeights layer;
    layer.name = r.str();
    layer.kind = kind_from_tag(r.u8());
    switch (layer.kind) {
      case LayerKind::kConv:
        layer.in_ch = checked_dim(r.i32(), "in_ch");
        layer.out_ch = checked_dim(r.i32(), "out_ch");
        layer.kernel = checked_dim(r.i32(), "kernel");
        layer.stride = checked_dim(r.i32(), "stride");
        layer.pad = r.i32();
        if (layer.pad < 0 || layer.pad > kMaxDim)
          throw WeightFileError(WeightFileError::Kind::kShapeMismatch,
                                "weights: bad layer pad");
        break;
      case LayerKind::kMaxpool:
        layer.kernel = checked_dim(r.i32(), "kernel");
        layer.stride = checked_dim(r.i32(), "stride");
        break;
      case LayerKind::kFire:
        layer.in_ch = checked_dim(r.i32(), "in_ch");
        layer.squeeze = checked_dim(r.i32(), "squeeze");
        layer.expand1 = checked_dim(r.i32(), "expand1");
        layer.expand3 = checked_dim(r.i32(), "expand3");
        break;
      case LayerKind::kAvgpool:
      case LayerKind::kSoftmax:
        break;
    }
    const std::uint8_t unit_count = r.u8();
    const std::uint8_t expect_units =
        layer.kind == LayerKind::kConv ? 1 : (layer.kind == LayerKind::kFire ? 3 : 0);
    if (unit_count != expect_units)
      throw WeightFileError(WeightFileError::Kind::kShapeMismatch,
                            "weights: layer '" + layer.name + "' has " +
                                std::to_string(unit_count) + " units, expected " +
                                std::to_string(expect_units));
    for (std::uint8_t ui = 0; ui < unit_count; ++ui) {
      ConvUnitWeights u;
      u.name = r.str();
      u.out_ch = checked_dim(r.i32(), "unit out_ch");
      u.in_ch = checked_dim(r.i32(), "unit in_ch");
      u.kernel = checked_dim(r.i32(), "unit kernel");
      u.stride = checked_dim(r.i32(), "unit stride");
      u.pad = r.i32();
      if (u.pad < 0 || u.pad > kMaxDim)
        throw WeightFileError(WeightFileError::Kind::kShapeMismatch, "weights: bad unit pad");
      const std::uint8_t flags = r.u8();
      if (flags & ~3)
        throw WeightFileError(WeightFileError::Kind::kShapeMismatch,
                              "weights: unknown unit flags");
      const std::size_t wsize =
          static_cast<std::size_t>(u.out_ch) * u.in_ch * u.kernel * u.kernel;
      if (wsize > (std::size_t{1} << 31))
        throw WeightFileError(WeightFileError::Kind::kShapeMismatch,
                              "weights: implausible tensor size");
      if (flags & 1) {
        FloatLayerParams f;
        f.out_ch = u.out_ch;
        f.in_ch = u.in_ch;
        f.kh = f.kw = u.kernel;
        f.stride = u.stride;
        f.pad = u.pad;
        f.weights.resize(wsize);
        for (auto& v : f.weights) v = r.f32();
        f.bias.resize(u.out_ch);
        for (auto& v : f.bias) v = r.f32();
        u.f = std::move(f);
      }
      if (flags & 2) {
        QuantConvParams q;
        q.qspec.weight_fmt = {8, r.i16()};
        q.qspec.bias_fmt = {8, r.i16()};
        q.qspec.input_fmt = {16, r.i16()};
        q.qspec.output_fmt = {16, r.i16()};
        q.weights = QTensor(u.out_ch, u.in_ch, u.kernel, u.kernel, q.qspec.weight_fmt);
        r.raw(q.weights.data.data(), q.weights.data.size());
        q.bias.resize(u.out_ch);
        r.raw(q.bias.data(), q.bias.size());
        u.q = std::move(q);
      }
      check_unit_against_layer(layer, ui, u);
      layer.units.push_back(std::move(u));
    }
    store.layers.push_back(std::move(layer));
  }
  if (r.left != 0)
    throw WeightFileError(WeightFileError::Kind::kTruncated,
                          "weights: " + std::to_string(r.left) + " trailing bytes");
  return store;
}

void save_weights(const WeightStore& store, const std::string& path) {
  const std::vector<std::uint8_t> bytes = save_weights_bytes(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WeightFileError(WeightFileError::Kind::kIo, "weights: cannot open " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WeightFileError(WeightFileError::Kind::kIo, "weights: write failed: " + path);
}

WeightStore load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFileError(WeightFileError::Kind::kIo, "weights: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return load_weights_bytes(bytes);
}

NetworkDef topology_from_store(const WeightStore& store, int input_w, int input_h,
                               int input_ch) {
  NetworkDef net;
  net.input_w = input_w;
  net.input_h = input_h;
  net.input_ch = input_ch;

  int ch = input_ch;
  bool have_classes = false;
  int index = 0;
  for (const LayerWeights& lw : store.layers) {
    LayerSpec l;
    l.index = ++index;
    l.name = lw.name;
    l.kind = lw.kind;
    l.in_ch = lw.in_ch;
    l.out_ch = lw.out_ch;
    l.kernel = lw.kernel;
    l.stride = lw.stride;
    l.pad = lw.pad;
    l.squeeze = lw.squeeze;
    l.expand1 = lw.expand1;
    l.expand3 = lw.expand3;
    if (lw.kind == LayerKind::kConv)
      ch = lw.out_ch;
    else if (lw.kind == LayerKind::kFire)
      ch = lw.expand1 + lw.expand3;
    if (lw.kind == LayerKind::kSoftmax && !have_classes) {
      net.classes = ch;
      have_classes = true;
    }
    net.layers.push_back(std::move(l));
  }
  if (!have_classes)
    throw WeightFileError(WeightFileError::Kind::kShapeMismatch,
                          "weights: store has no softmax layer, cannot derive class count");
  return compose_network(std::move(net));
}

WeightStore random_float_store(const NetworkDef& net, std::uint32_t seed) {
  WeightStore store = make_store_skeleton(net);
  std::mt19937 rng(seed);
  for (LayerWeights& layer : store.layers)
    for (ConvUnitWeights& u : layer.units) {
      FloatLayerParams f;
      f.out_ch = u.out_ch;
      f.in_ch = u.in_ch;
      f.kh = f.kw = u.kernel;
      f.stride = u.stride;
      f.pad = u.pad;
      const float fan_in = static_cast<float>(u.in_ch * u.kernel * u.kernel);
      const float limit = std::sqrt(3.0f / fan_in);
      std::uniform_real_distribution<float> wd(-limit, limit);
      std::uniform_real_distribution<float> bd(-0.1f, 0.1f);
      f.weights.resize(static_cast<std::size_t>(u.out_ch) * u.in_ch * u.kernel * u.kernel);
      for (auto& v : f.weights) v = wd(rng);
      f.bias.resize(u.out_ch);
      for (auto& v : f.bias) v = bd(rng);
      u.f = std::move(f);
    }
  return store;
}

WeightStore random_quant_store(const NetworkDef& net, std::uint32_t seed) {
  WeightStore store = make_store_skeleton(net);
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> wd(-24, 24);
  std::uniform_int_distribution<int> bd(-16, 16);
  const QFormat fmap_fmt{16, 7};
  for (LayerWeights& layer : store.layers)
    for (ConvUnitWeights& u : layer.units) {
      QuantConvParams q;
      q.qspec = LayerQSpec{{8, 7}, {8, 6}, fmap_fmt, fmap_fmt};
      q.weights = QTensor(u.out_ch, u.in_ch, u.kernel, u.kernel, q.qspec.weight_fmt);
      for (auto& v : q.weights.data) v = static_cast<std::int8_t>(wd(rng));
      q.bias.resize(u.out_ch);
      for (auto& v : q.bias) v = static_cast<std::int8_t>(bd(rng));
      u.q = std::move(q);
    }
  return store;
}

}  // namespace sqn
