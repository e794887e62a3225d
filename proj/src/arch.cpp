#include "asv/arch.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "asv/geometry.hpp"

namespace asv {

using nlohmann::json;

std::string_view to_string(LayerKind k) {
  return k == LayerKind::Conv ? "conv" : "fc";
}

std::string_view to_string(Activation a) {
  return a == Activation::ReLU ? "relu" : "identity";
}

std::string_view to_string(PoolKind p) {
  switch (p) {
    case PoolKind::Max: return "max";
    case PoolKind::Average: return "average";
    case PoolKind::GlobalAverage: return "global_average";
  }
  return "?";
}

namespace {

std::string where(int layer, const char* field) {
  std::string s = layer > 0 ? "layer " + std::to_string(layer) + ": " : std::string{};
  return s + "field '" + field + "'";
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, int layer,
                         const char* context) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) {
      std::string msg = std::string("unknown key '") + key + "' in " + context;
      if (layer > 0) msg = "layer " + std::to_string(layer) + ": " + msg;
      throw SchemaError(msg);
    }
  }
}

int get_int(const json& v, int layer, const char* field) {
  if (!v.is_number_integer()) throw SchemaError(where(layer, field) + " must be an integer");
  const auto x = v.get<long long>();
  if (x < -1'000'000'000LL || x > 1'000'000'000LL)
    throw SchemaError(where(layer, field) + " out of range");
  return static_cast<int>(x);
}

Extent2 get_pair(const json& v, int layer, const char* field) {
  if (!v.is_array() || v.size() != 2)
    throw SchemaError(where(layer, field) + " must be an array of two integers");
  return {get_int(v[0], layer, field), get_int(v[1], layer, field)};
}

std::string get_string(const json& v, int layer, const char* field) {
  if (!v.is_string()) throw SchemaError(where(layer, field) + " must be a string");
  return v.get<std::string>();
}

PoolSpec parse_pool(const json& j, int layer) {
  if (!j.is_object()) throw SchemaError(where(layer, "pool") + " must be an object");
  reject_unknown_keys(j, {"kind", "size", "stride", "padding", "window"}, layer, "pool");
  if (!j.contains("kind")) throw SchemaError(where(layer, "pool.kind") + " is required");
  PoolSpec p;
  const auto kind = get_string(j["kind"], layer, "pool.kind");
  if (kind == "max") p.kind = PoolKind::Max;
  else if (kind == "average") p.kind = PoolKind::Average;
  else if (kind == "global_average") p.kind = PoolKind::GlobalAverage;
  else throw SchemaError(where(layer, "pool.kind") + " has unknown value '" + kind + "'");

  if (p.kind == PoolKind::GlobalAverage) {
    for (const char* k : {"size", "stride", "padding"})
      if (j.contains(k))
        throw ValidationError(layer, std::string("global_average pool takes no '") + k + "'");
    p.size = {0, 0};
    p.stride = {0, 0};
  } else {
    if (!j.contains("size")) throw SchemaError(where(layer, "pool.size") + " is required");
    p.size = get_pair(j["size"], layer, "pool.size");
    p.stride = j.contains("stride") ? get_pair(j["stride"], layer, "pool.stride") : p.size;
    if (j.contains("padding")) p.padding = get_pair(j["padding"], layer, "pool.padding");
  }
  if (j.contains("window")) p.window = get_int(j["window"], layer, "pool.window");
  return p;
}

LayerSpec parse_layer(const json& j, int layer) {
  if (!j.is_object()) throw SchemaError("layer " + std::to_string(layer) + " must be an object");
  reject_unknown_keys(j, {"kind", "kernel", "stride", "padding", "out_channels", "activation", "pool"},
                      layer, "layer");
  LayerSpec s;
  if (!j.contains("kind")) throw SchemaError(where(layer, "kind") + " is required");
  const auto kind = get_string(j["kind"], layer, "kind");
  if (kind == "conv") s.kind = LayerKind::Conv;
  else if (kind == "fc") s.kind = LayerKind::FullyConnected;
  else throw SchemaError(where(layer, "kind") + " has unknown value '" + kind + "'");

  if (!j.contains("out_channels")) throw SchemaError(where(layer, "out_channels") + " is required");
  s.out_channels = get_int(j["out_channels"], layer, "out_channels");

  if (s.kind == LayerKind::Conv) {
    if (!j.contains("kernel")) throw SchemaError(where(layer, "kernel") + " is required");
    s.kernel = get_pair(j["kernel"], layer, "kernel");
    if (j.contains("stride")) s.stride = get_pair(j["stride"], layer, "stride");
    if (j.contains("padding")) s.padding = get_pair(j["padding"], layer, "padding");
    s.activation = Activation::ReLU;
  } else {
    for (const char* k : {"kernel", "stride", "padding"})
      if (j.contains(k))
        throw ValidationError(layer, std::string("fully connected layer takes no '") + k + "'");
    s.activation = Activation::Identity;
  }

  if (j.contains("activation")) {
    const auto a = get_string(j["activation"], layer, "activation");
    if (a == "relu") s.activation = Activation::ReLU;
    else if (a == "identity") s.activation = Activation::Identity;
    else throw SchemaError(where(layer, "activation") + " has unknown value '" + a + "'");
  }
  if (j.contains("pool") && !j["pool"].is_null()) s.pool = parse_pool(j["pool"], layer);
  return s;
}

void check_extent(Extent2 e, int min, int layer, const char* what) {
  if (e.w < min || e.h < min)
    throw ValidationError(layer, std::string(what) + " must be >= " + std::to_string(min));
}

}  // namespace

void validate(const Architecture& arch) {
  if (arch.input.w < 1 || arch.input.h < 1 || arch.input.d < 1)
    throw ValidationError(-1, "input shape must be positive");
  if (arch.layers.empty()) throw ValidationError(-1, "architecture has no layers");

  Shape3 cur = arch.input;
  for (std::size_t idx = 0; idx < arch.layers.size(); ++idx) {
    const int layer = static_cast<int>(idx) + 1;
    const LayerSpec& s = arch.layers[idx];
    if (s.out_channels < 1) throw ValidationError(layer, "out_channels must be >= 1");

    if (s.kind == LayerKind::Conv) {
      check_extent(s.kernel, 1, layer, "kernel");
      check_extent(s.stride, 1, layer, "stride");
      check_extent(s.padding, 0, layer, "padding");
      if (s.padding.w >= s.kernel.w || s.padding.h >= s.kernel.h)
        throw ValidationError(layer, "padding must be smaller than the kernel");
      const int w = window_out_extent(cur.w, s.kernel.w, s.stride.w, s.padding.w);
      const int h = window_out_extent(cur.h, s.kernel.h, s.stride.h, s.padding.h);
      if (w < 1 || h < 1)
        throw ValidationError(layer, "kernel does not fit the " + std::to_string(cur.w) + "x" +
                                         std::to_string(cur.h) + " input");
      cur = {w, h, s.out_channels};
    } else {
      if (s.pool) throw ValidationError(layer, "fully connected layer cannot pool");
      cur = {1, 1, s.out_channels};
    }

    if (s.pool) {
      const PoolSpec& p = *s.pool;
      if (p.kind == PoolKind::GlobalAverage) {
        if (p.padding != Extent2{0, 0}) throw ValidationError(layer, "global_average pool takes no padding");
        cur = {1, 1, cur.d};
      } else {
        check_extent(p.size, 1, layer, "pool size");
        check_extent(p.stride, 1, layer, "pool stride");
        check_extent(p.padding, 0, layer, "pool padding");
        if (p.padding.w >= p.size.w || p.padding.h >= p.size.h)
          throw ValidationError(layer, "pool padding must be smaller than the pool size");
        const int w = window_out_extent(cur.w, p.size.w, p.stride.w, p.padding.w);
        const int h = window_out_extent(cur.h, p.size.h, p.stride.h, p.padding.h);
        if (w < 1 || h < 1) throw ValidationError(layer, "pool window does not fit the feature map");
        cur = {w, h, cur.d};
      }
      if (p.window && *p.window < 1) throw ValidationError(layer, "pool window must be >= 1");
    }
  }

  const LayerSpec& last = arch.layers.back();
  const int last_idx = static_cast<int>(arch.layers.size());
  if (last.kind != LayerKind::FullyConnected)
    throw ValidationError(last_idx, "last layer must be fully connected");
  if (last.activation != Activation::Identity)
    throw ValidationError(last_idx, "last layer must use identity activation");
}

Architecture parse_architecture(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("architecture must be a JSON object");
  reject_unknown_keys(j, {"name", "input", "layers"}, 0, "architecture");
  for (const char* k : {"input", "layers"})
    if (!j.contains(k)) throw SchemaError(std::string("field '") + k + "' is required");

  Architecture arch;
  if (j.contains("name")) arch.name = get_string(j["name"], 0, "name");
  const auto& in = j["input"];
  if (!in.is_array() || in.size() != 3) throw SchemaError("field 'input' must be [w, h, d]");
  arch.input = {get_int(in[0], 0, "input"), get_int(in[1], 0, "input"), get_int(in[2], 0, "input")};

  const auto& layers = j["layers"];
  if (!layers.is_array()) throw SchemaError("field 'layers' must be an array");
  int idx = 0;
  for (const auto& l : layers) arch.layers.push_back(parse_layer(l, ++idx));

  validate(arch);
  return arch;
}

Architecture load_architecture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open architecture file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_architecture(buf.str());
}

std::string serialize_architecture(const Architecture& arch) {
  json j;
  j["name"] = arch.name;
  j["input"] = {arch.input.w, arch.input.h, arch.input.d};
  json layers = json::array();
  for (const auto& s : arch.layers) {
    json l;
    l["kind"] = to_string(s.kind);
    if (s.kind == LayerKind::Conv) {
      l["kernel"] = {s.kernel.w, s.kernel.h};
      l["stride"] = {s.stride.w, s.stride.h};
      l["padding"] = {s.padding.w, s.padding.h};
    }
    l["out_channels"] = s.out_channels;
    l["activation"] = to_string(s.activation);
    if (s.pool) {
      json p;
      p["kind"] = to_string(s.pool->kind);
      if (s.pool->kind != PoolKind::GlobalAverage) {
        p["size"] = {s.pool->size.w, s.pool->size.h};
        p["stride"] = {s.pool->stride.w, s.pool->stride.h};
        p["padding"] = {s.pool->padding.w, s.pool->padding.h};
      }
      if (s.pool->window) p["window"] = *s.pool->window;
      l["pool"] = p;
    }
    layers.push_back(l);
  }
  j["layers"] = layers;
  return j.dump(2);
}

namespace {

LayerSpec conv(int k, int c, int pad, int stride) {
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.kernel = {k, k};
  s.stride = {stride, stride};
  s.padding = {pad, pad};
  s.out_channels = c;
  s.activation = Activation::ReLU;
  return s;
}

void input_block(std::vector<LayerSpec>& out, int c) {
  LayerSpec s = conv(7, c, 3, 2);
  PoolSpec p;
  p.kind = PoolKind::Max;
  p.size = {3, 3};
  p.stride = {2, 2};
  p.padding = {1, 1};
  s.pool = p;
  out.push_back(s);
}

void conv_block(std::vector<LayerSpec>& out, int c, int stride = 1) {
  out.push_back(conv(3, c, 1, stride));
  out.push_back(conv(3, c, 1, 1));
}

void conv_block2(std::vector<LayerSpec>& out, int c1, int c2, int stride = 1) {
  out.push_back(conv(1, c1, 0, 1));
  out.push_back(conv(3, c1, 1, stride));
  out.push_back(conv(1, c2, 0, 1));
}

void finish(std::vector<LayerSpec>& out) {
  PoolSpec gap;
  gap.kind = PoolKind::GlobalAverage;
  gap.size = {0, 0};
  gap.stride = {0, 0};
  out.back().pool = gap;

  LayerSpec fc;
  fc.kind = LayerKind::FullyConnected;
  fc.out_channels = 10;
  fc.activation = Activation::Identity;
  out.push_back(fc);
}

}  // namespace

Architecture builtin(std::string_view name) {
  Architecture a;
  a.input = {224, 224, 3};
  if (name == "arch34") {
    a.name = "arch34";
    input_block(a.layers, 64);
    for (int i = 0; i < 3; ++i) conv_block(a.layers, 64);
    conv_block(a.layers, 128, 2);
    for (int i = 0; i < 3; ++i) conv_block(a.layers, 128);
    conv_block(a.layers, 256, 2);
    for (int i = 0; i < 5; ++i) conv_block(a.layers, 256);
    conv_block(a.layers, 512, 2);
    for (int i = 0; i < 2; ++i) conv_block(a.layers, 512);
  } else if (name == "arch50") {
    a.name = "arch50";
    input_block(a.layers, 64);
    for (int i = 0; i < 3; ++i) conv_block2(a.layers, 64, 256);
    conv_block2(a.layers, 128, 512, 2);
    for (int i = 0; i < 3; ++i) conv_block2(a.layers, 128, 512);
    conv_block2(a.layers, 256, 1024, 2);
    for (int i = 0; i < 5; ++i) conv_block2(a.layers, 256, 1024);
    conv_block2(a.layers, 512, 2048, 2);
    for (int i = 0; i < 2; ++i) conv_block2(a.layers, 512, 2048);
  } else {
    throw UnknownName("unknown builtin architecture '" + std::string(name) + "'");
  }
  finish(a.layers);
  validate(a);
  return a;
}

}  // namespace asv
