#include "trajloom/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

#include "trajloom/io.hpp"

namespace trajloom {

namespace {

using Ref = std::variant<int*, double*, std::uint64_t*, bool*, std::string*, std::optional<double>*, AnchorMode*,
                         GridSpacing*, SamplerSpec::Kind*, std::vector<int>*, std::vector<double>*,
                         std::vector<MotionKind>*>;

struct Field {
  const char* section;
  const char* key;
  std::function<Ref(RunConfig&)> ref;
};

#define TL_FIELD(section, key, expr) Field{section, key, [](RunConfig& c) -> Ref { return &(expr); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      TL_FIELD("run", "seed", c.seed),
      TL_FIELD("run", "output_dir", c.output_dir),

      TL_FIELD("data", "height", c.data.height),
      TL_FIELD("data", "width", c.data.width),
      TL_FIELD("data", "stride", c.data.stride),
      TL_FIELD("data", "segment", c.data.segment),
      TL_FIELD("data", "train_scenes", c.data.train_scenes),
      TL_FIELD("data", "eval_scenes", c.data.eval_scenes),
      TL_FIELD("data", "jitter", c.data.jitter),
      TL_FIELD("data", "kinds", c.data.kinds),

      TL_FIELD("vae", "patch", c.vae.patch),
      TL_FIELD("vae", "ratio", c.vae.ratio),
      TL_FIELD("vae", "channels", c.vae.channels),
      TL_FIELD("vae", "hidden", c.vae.hidden),
      TL_FIELD("vae", "blocks", c.vae.blocks),
      TL_FIELD("vae", "logvar_bias_init", c.vae.logvar_bias_init),
      TL_FIELD("vae", "steps", c.vae_train.steps),
      TL_FIELD("vae", "batch", c.vae_train.batch),
      TL_FIELD("vae", "lr", c.vae_train.optim.lr),
      TL_FIELD("vae", "beta1", c.vae_train.optim.beta1),
      TL_FIELD("vae", "beta2", c.vae_train.optim.beta2),
      TL_FIELD("vae", "weight_decay", c.vae_train.optim.weight_decay),
      TL_FIELD("vae", "eps", c.vae_train.optim.eps),
      TL_FIELD("vae", "clip_norm", c.vae_train.optim.clip_norm),
      TL_FIELD("vae", "huber_delta", c.vae_train.loss.huber_delta),
      TL_FIELD("vae", "lambda_temporal", c.vae_train.loss.lambda_temporal),
      TL_FIELD("vae", "lambda_spatial", c.vae_train.loss.lambda_spatial),
      TL_FIELD("vae", "beta_kl", c.vae_train.loss.beta_kl),
      TL_FIELD("vae", "neighbor_hops", c.vae_train.loss.neighbors.hops),
      TL_FIELD("vae", "neighbor_weights", c.vae_train.loss.neighbors.weights),

      TL_FIELD("flow", "hidden", c.flow_hidden),
      TL_FIELD("flow", "blocks", c.flow_blocks),
      TL_FIELD("flow", "alpha_init", c.flow_alpha_init),
      TL_FIELD("flow", "steps", c.flow.steps),
      TL_FIELD("flow", "batch", c.flow.batch),
      TL_FIELD("flow", "lr", c.flow.optim.lr),
      TL_FIELD("flow", "weight_decay", c.flow.optim.weight_decay),
      TL_FIELD("flow", "clip_norm", c.flow.optim.clip_norm),
      TL_FIELD("flow", "tube_sigma", c.flow.tube_sigma),
      TL_FIELD("flow", "anchor_sigma", c.flow.anchor_sigma),
      TL_FIELD("flow", "anchor", c.flow.anchor),
      TL_FIELD("flow", "uniform_prob", c.flow.time.uniform_prob),
      TL_FIELD("flow", "uniform_max", c.flow.time.uniform_max),
      TL_FIELD("flow", "time_clamp", c.flow.time.clamp),
      TL_FIELD("flow", "invisible_weight", c.invisible_weight),

      TL_FIELD("finetune", "steps", c.finetune.flow.steps),
      TL_FIELD("finetune", "batch", c.finetune.flow.batch),
      TL_FIELD("finetune", "lr", c.finetune.flow.optim.lr),
      TL_FIELD("finetune", "weight_decay", c.finetune.flow.optim.weight_decay),
      TL_FIELD("finetune", "clip_norm", c.finetune.flow.optim.clip_norm),
      TL_FIELD("finetune", "lambda_kstep", c.finetune.lambda_kstep),
      TL_FIELD("finetune", "gamma", c.finetune.gamma),
      TL_FIELD("finetune", "w1", c.finetune.w1),
      TL_FIELD("finetune", "w0", c.finetune.w0),
      TL_FIELD("finetune", "rollout_steps", c.finetune.rollout_steps),
      TL_FIELD("finetune", "sub_batch", c.finetune.sub_batch),
      TL_FIELD("finetune", "denom_clamp", c.finetune.denom_clamp),
      TL_FIELD("finetune", "grid_eps", c.finetune.grid_eps),
      TL_FIELD("finetune", "spacing", c.finetune.spacing),
      TL_FIELD("finetune", "masked_consistency", c.finetune.masked_consistency),

      TL_FIELD("visibility", "hidden", c.visibility.hidden),
      TL_FIELD("visibility", "layers", c.visibility.layers),
      TL_FIELD("visibility", "threshold", c.visibility.threshold),
      TL_FIELD("visibility", "steps", c.visibility_train.steps),
      TL_FIELD("visibility", "batch", c.visibility_train.batch),
      TL_FIELD("visibility", "lr", c.visibility_train.optim.lr),

      TL_FIELD("sampler", "kind", c.sampler.kind),
      TL_FIELD("sampler", "steps", c.sampler.steps),
      TL_FIELD("sampler", "rtol", c.sampler.rtol),
      TL_FIELD("sampler", "atol", c.sampler.atol),

      TL_FIELD("metrics", "literal_div_curl", c.metrics.literal_div_curl),

      TL_FIELD("caption", "translation", c.caption.translation),
      TL_FIELD("caption", "zoom", c.caption.zoom),
      TL_FIELD("caption", "roll", c.caption.roll),
      TL_FIELD("caption", "fast_translation", c.caption.fast_translation),
      TL_FIELD("caption", "fast_zoom", c.caption.fast_zoom),
      TL_FIELD("caption", "fast_roll", c.caption.fast_roll),
      TL_FIELD("caption", "shake_ratio", c.caption.shake_ratio),
      TL_FIELD("caption", "shake_floor", c.caption.shake_floor),
  };
  return table;
}

#undef TL_FIELD

[[noreturn]] void bad_value(const Field& f, const std::string& text, const char* expected) {
  throw ConfigError(std::string("config: [") + f.section + "] " + f.key + " = '" + text + "' is not " + expected);
}

template <typename T>
T parse_number(const Field& f, const std::string& text, const char* expected) {
  T v{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) bad_value(f, text, expected);
  return v;
}

template <typename T>
std::vector<T> parse_list(const Field& f, const std::string& text, const char* expected) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
    if (b == std::string::npos) bad_value(f, text, expected);
    out.push_back(parse_number<T>(f, item.substr(b, e - b + 1), expected));
  }
  return out;
}

template <typename E>
E parse_enum(const Field& f, const std::string& text, std::initializer_list<std::pair<const char*, E>> names,
             const char* expected) {
  for (const auto& [n, v] : names)
    if (text == n) return v;
  bad_value(f, text, expected);
}

const std::initializer_list<std::pair<const char*, AnchorMode>> kAnchor{{"first_slice", AnchorMode::first_slice},
                                                                        {"all_slices", AnchorMode::all_slices}};
const std::initializer_list<std::pair<const char*, GridSpacing>> kSpacing{{"logit", GridSpacing::logit},
                                                                          {"uniform", GridSpacing::uniform}};
const std::initializer_list<std::pair<const char*, SamplerSpec::Kind>> kSampler{
    {"euler", SamplerSpec::Kind::euler},
    {"dopri5", SamplerSpec::Kind::dopri5},
    {"dopri5_fixed", SamplerSpec::Kind::dopri5_fixed}};
const std::initializer_list<std::pair<const char*, MotionKind>> kKinds{{"translation", MotionKind::translation},
                                                                       {"rotation", MotionKind::rotation},
                                                                       {"zoom", MotionKind::zoom},
                                                                       {"shear", MotionKind::shear},
                                                                       {"static", MotionKind::static_scene}};

template <typename E>
std::string enum_name(E v, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [n, x] : names)
    if (x == v) return n;
  return "?";
}

void assign(const Field& f, Ref ref, const std::string& text) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, int>) {
          *p = parse_number<int>(f, text, "an integer");
        } else if constexpr (std::is_same_v<T, double>) {
          *p = parse_number<double>(f, text, "a number");
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          *p = parse_number<std::uint64_t>(f, text, "an unsigned integer");
        } else if constexpr (std::is_same_v<T, bool>) {
          if (text == "true")
            *p = true;
          else if (text == "false")
            *p = false;
          else
            bad_value(f, text, "true or false");
        } else if constexpr (std::is_same_v<T, std::string>) {
          *p = text;
        } else if constexpr (std::is_same_v<T, std::optional<double>>) {
          if (text == "none")
            p->reset();
          else
            *p = parse_number<double>(f, text, "a number or none");
        } else if constexpr (std::is_same_v<T, AnchorMode>) {
          *p = parse_enum(f, text, kAnchor, "first_slice or all_slices");
        } else if constexpr (std::is_same_v<T, GridSpacing>) {
          *p = parse_enum(f, text, kSpacing, "logit or uniform");
        } else if constexpr (std::is_same_v<T, SamplerSpec::Kind>) {
          *p = parse_enum(f, text, kSampler, "euler, dopri5 or dopri5_fixed");
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
          *p = parse_list<int>(f, text, "a comma-separated integer list");
        } else if constexpr (std::is_same_v<T, std::vector<MotionKind>>) {
          // Empty means every kind.
          p->clear();
          std::stringstream ss(text);
          std::string item;
          while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
            if (b == std::string::npos) bad_value(f, text, "a comma-separated list of motion kinds");
            p->push_back(parse_enum(f, item.substr(b, e - b + 1), kKinds, "a comma-separated list of motion kinds"));
          }
        } else {
          *p = parse_list<double>(f, text, "a comma-separated number list");
        }
      },
      ref);
}

std::string render(Ref ref) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) {
          return std::to_string(*p);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_number(*p);
        } else if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<T, std::optional<double>>) {
          return *p ? format_number(**p) : "none";
        } else if constexpr (std::is_same_v<T, AnchorMode>) {
          return enum_name(*p, kAnchor);
        } else if constexpr (std::is_same_v<T, GridSpacing>) {
          return enum_name(*p, kSpacing);
        } else if constexpr (std::is_same_v<T, SamplerSpec::Kind>) {
          return enum_name(*p, kSampler);
        } else {
          std::string out;
          for (std::size_t i = 0; i < p->size(); ++i) {
            if (i) out += ",";
            if constexpr (std::is_same_v<T, std::vector<MotionKind>>)
              out += enum_name((*p)[i], kKinds);
            else if constexpr (std::is_same_v<T, std::vector<int>>)
              out += std::to_string((*p)[i]);
            else
              out += format_number((*p)[i]);
          }
          return out;
        }
      },
      ref);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

}  // namespace

void RunConfig::resolve() {
  vae.height = data.height;
  vae.width = data.width;
  vae.frames = data.segment;
  visibility.channels = vae.channels;
  vae_train.seed = seed * 4 + 1;
  flow.seed = seed * 4 + 2;
  const FlowTrainConfig ft = finetune.flow;
  finetune.flow = flow;
  finetune.flow.steps = ft.steps;
  finetune.flow.batch = ft.batch;
  finetune.flow.optim = ft.optim;
  finetune.flow.seed = seed * 4 + 3;
  visibility_train.seed = seed * 4 + 4;
}

void RunConfig::validate() const {
  FrameGeometry{data.height, data.width, data.stride}.validate();
  require(data.segment > 0 && data.train_scenes > 0 && data.eval_scenes > 0, "data extents must be positive");
  require(data.jitter >= 0, "data.jitter must be >= 0");
  vae.validate();
  require(vae.height == data.height && vae.width == data.width && vae.frames == data.segment,
          "vae frame size must follow [data] (call resolve)");
  require(vae.patch % data.stride == 0, "vae.patch must be a multiple of data.stride");
  vae_train.loss.neighbors.validate();
  velocity().validate();
  for (const AdamWOptions* o : {&vae_train.optim, &flow.optim, &finetune.flow.optim, &visibility_train.optim})
    require(o->lr > 0 && o->beta1 >= 0 && o->beta1 < 1 && o->beta2 >= 0 && o->beta2 < 1 && o->eps > 0 &&
                o->weight_decay >= 0 && (!o->clip_norm || *o->clip_norm > 0),
            "optimizer settings out of range");
  for (int s : {vae_train.steps, flow.steps, finetune.flow.steps, visibility_train.steps})
    require(s >= 0, "step counts must be >= 0");
  for (int b : {vae_train.batch, flow.batch, finetune.flow.batch, visibility_train.batch})
    require(b >= 1, "batch sizes must be >= 1");
  require(flow.tube_sigma >= 0 && flow.anchor_sigma >= 0, "flow sigmas must be >= 0");
  require(flow.time.uniform_prob >= 0 && flow.time.uniform_prob <= 1 && flow.time.uniform_max > 0 &&
              flow.time.clamp > 0 && flow.time.clamp < 0.5,
          "flow time sampler settings out of range");
  require(invisible_weight > 0, "flow.invisible_weight must be > 0");
  require(finetune.lambda_kstep >= 0 && finetune.gamma >= 0 && finetune.w1 >= 0 && finetune.w0 >= 0,
          "finetune weights must be >= 0");
  require(finetune.rollout_steps >= 2 && finetune.sub_batch >= 1, "finetune rollout needs K >= 2 and sub_batch >= 1");
  require(finetune.denom_clamp > 0 && finetune.grid_eps > 0 && finetune.grid_eps < 0.5, "finetune clamps out of range");
  require(visibility.hidden > 0 && visibility.layers >= 0 && visibility.threshold > 0 && visibility.threshold < 1,
          "visibility settings out of range");
  require(sampler.steps >= 1 && sampler.rtol > 0 && sampler.atol > 0, "sampler settings out of range");
}

CorpusSpec RunConfig::corpus() const {
  CorpusSpec c;
  c.geometry = {data.height, data.width, data.stride};
  c.segment = data.segment;
  c.jitter = data.jitter;
  c.kinds = data.kinds;
  return c;
}

VelocityConfig RunConfig::velocity() const {
  VelocityConfig v = VelocityConfig::for_vae(vae, data.segment, data.segment);
  v.hidden = flow_hidden;
  v.blocks = flow_blocks;
  v.alpha_init = flow_alpha_init;
  return v;
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config: key '" + section + "' outside a section");
    bool known_section = false;
    for (const Field& f : fields()) known_section = known_section || section == f.section;
    if (!known_section) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      const Field* match = nullptr;
      for (const Field& f : fields())
        if (section == f.section && key == f.key) match = &f;
      if (!match) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
      assign(*match, match->ref(c), value.get_value<std::string>());
    }
  }
  c.resolve();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& config) {
  RunConfig& c = const_cast<RunConfig&>(config);
  std::string out, section;
  for (const Field& f : fields()) {
    if (section != f.section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(f.key) + " = " + render(f.ref(c)) + "\n";
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& config) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : dump_config(config)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace trajloom
