#include "trajloom/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "trajloom/config.hpp"
#include "trajloom/gradsuite.hpp"
#include "trajloom/io.hpp"
#include "trajloom/metrics.hpp"
#include "trajloom/motionlab.hpp"
#include "trajloom/training.hpp"

namespace trajloom {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "run configuration (INI)");
    app->add_option("--seed", seed, "override [run] seed");
    app->add_option("--out", out, "output directory");
  }
};

struct Run {
  std::string command;
  std::vector<std::string> args;
  RunConfig cfg;
  fs::path out;
  std::vector<std::string> outputs;

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
};

Run open_run(const std::string& command, const std::vector<std::string>& args, const Common& c) {
  Run r;
  r.command = command;
  r.args.assign(args.begin() + 1, args.end());
  r.cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) r.cfg.seed = *c.seed;
  r.cfg.resolve();
  r.cfg.validate();
  if (!c.out.empty())
    r.out = c.out;
  else if (!r.cfg.output_dir.empty())
    r.out = r.cfg.output_dir;
  else if (const char* env = std::getenv("TRAJLOOM_OUT"); env && *env)
    r.out = env;
  else
    r.out = "trajloom_out";
  fs::create_directories(r.out);
  return r;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

void close_run(Run& r) {
  std::sort(r.outputs.begin(), r.outputs.end());
  nlohmann::ordered_json j;
  j["command"] = r.command;
  j["args"] = r.args;
  j["config_hash"] = hex64(config_hash(r.cfg));
  j["seed"] = r.cfg.seed;
  j["outputs"] = r.outputs;
  const std::string text = j.dump(2) + "\n";
  write_bytes(r.out / (r.command + ".manifest.json"), std::vector<char>(text.begin(), text.end()));
}

std::string show(double v) {
  std::string s = format_number(v);
  if (s.find_first_of(".eni") == std::string::npos) s += ".0";
  return s;
}

// Any trajectory file -> pixel positions on its coarse track grid.
SparseTracks<double> pixel_tracks(const TlfFile& f) {
  switch (f.convention) {
    case CoordConvention::absolute_pixel:
      if (f.dense()) {
        SparseTracks<double> t{{f.height, f.width, 1}, f.data.cast<double>()};
        return t;
      }
      return tracks_from_tlf(f);
    case CoordConvention::absolute_normalized:
      if (!f.dense()) {
        SparseTracks<double> t{{f.height, f.width, f.stride}, f.data.cast<double>()};
        for (Index r = 0; r < t.points.size(); ++r) {
          t.points.coords(r, 0) = pixel_coord(t.points.coords(r, 0), f.width);
          t.points.coords(r, 1) = pixel_coord(t.points.coords(r, 1), f.height);
        }
        return t;
      }
      return cell_tracks(DenseField<double>{f.data.cast<double>(), f.stride}, f.stride);
    case CoordConvention::offset:
      if (!f.dense()) throw FormatError("offset files must hold a dense per-pixel field");
      return tracks_from_offsets(OffsetField<double>{f.data.cast<double>(), f.stride}, f.stride);
  }
  throw FormatError("unknown coordinate convention");
}

OffsetField<double> offsets_of(const TlfFile& f) {
  if (f.convention == CoordConvention::offset) return {f.data.cast<double>(), f.stride};
  if (f.convention == CoordConvention::absolute_normalized && f.dense())
    return to_offsets(DenseField<double>{f.data.cast<double>(), f.stride});
  return offsets_from_tracks(pixel_tracks(f));
}

OffsetField<double> last_frames(const OffsetField<double>& f, int frames) {
  if (f.frames() < frames)
    throw ShapeError("need at least " + std::to_string(frames) + " frames, file has " + std::to_string(f.frames()));
  if (f.frames() == frames) return f;
  auto [a, b] = split_windows(f, f.frames() - frames, frames);
  return b;
}

Checkpoint make_checkpoint(const std::string& kind, const ParamSet& params, const RunConfig& cfg) {
  Checkpoint c;
  c.meta["kind"] = kind;
  c.meta["config_hash"] = hex64(config_hash(cfg));
  c.params = params;
  return c;
}

ParamSet load_params(const fs::path& path, const std::string& kind) {
  Checkpoint c = read_checkpoint(path);
  if (c.meta["kind"] != kind) throw FormatError(path.string() + ": expected a " + kind + " checkpoint");
  return c.params;
}

LatentStats load_stats(const fs::path& path) {
  const ParamSet p = load_params(path, "stats");
  return {p.at("stats.mean"), p.at("stats.std")};
}

void write_curve(const fs::path& path, const std::vector<double>& curve) {
  CsvTable t{{"step", "loss"}, {}};
  for (std::size_t i = 0; i < curve.size(); ++i) t.rows.push_back({std::to_string(i), format_number(curve[i])});
  write_csv(path, t);
}

// Merges into <command>_metrics.csv: a metric already present is replaced
// in place, new ones are appended.
void append_metrics(Run& r, const std::vector<std::pair<std::string, double>>& values) {
  const fs::path path = r.file(r.command + "_metrics.csv");
  CsvTable t{{"metric", "value"}, {}};
  if (fs::exists(path)) t.rows = read_csv(path).rows;
  for (const auto& [k, v] : values) {
    auto row = std::find_if(t.rows.begin(), t.rows.end(), [&](const auto& x) { return x.at(0) == k; });
    if (row != t.rows.end())
      row->at(1) = format_number(v);
    else
      t.rows.push_back({k, format_number(v)});
  }
  write_csv(path, t);
}

std::vector<FlowSample> flow_corpus(const RunConfig& cfg, int count, std::uint64_t salt) {
  Rng rng(cfg.seed * 1000003 + salt);
  return motion_windows(cfg.corpus(), count, rng);
}

// ---- subcommands -----------------------------------------------------------

struct SynthArgs {
  std::string kind = "translation";
  double vx = 0, vy = 0, omega = 0, zoom = 0, shear = 0;
  int frames = 16;
  std::optional<int> height, width, stride;
  double jitter_x = 0, jitter_y = 0;
  bool jitter_random = false;
  std::vector<std::string> occlusions;
  std::string region;
  std::string output;
};

std::vector<double> number_list(const std::string& s, std::size_t n, const char* what) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    try {
      v.push_back(std::stod(item, &used));
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError(std::string(what) + ": bad number '" + item + "'");
  }
  if (v.size() != n) throw ConfigError(std::string(what) + " needs " + std::to_string(n) + " comma-separated values");
  return v;
}

void cmd_synth(Run& r, const SynthArgs& a) {
  MotionSpec s;
  static const std::map<std::string, MotionKind> kinds{{"translation", MotionKind::translation},
                                                       {"rotation", MotionKind::rotation},
                                                       {"zoom", MotionKind::zoom},
                                                       {"shear", MotionKind::shear},
                                                       {"static", MotionKind::static_scene}};
  const auto k = kinds.find(a.kind);
  if (k == kinds.end()) throw ConfigError("synth: unknown kind '" + a.kind + "'");
  s.kind = k->second;
  s.velocity = {a.vx, a.vy};
  s.angular_rate = a.omega;
  s.zoom_rate = a.zoom;
  s.shear_rate = a.shear;
  s.frames = a.frames;
  s.geometry = {a.height.value_or(r.cfg.data.height), a.width.value_or(r.cfg.data.width),
                a.stride.value_or(r.cfg.data.stride)};
  s.jitter = {a.jitter_x, a.jitter_y, a.jitter_random};
  for (const std::string& o : a.occlusions) {
    const auto v = number_list(o, 6, "--occlude");
    s.occlusions.push_back({v[0], v[1], v[2], v[3], static_cast<int>(v[4]), static_cast<int>(v[5])});
  }
  if (!a.region.empty()) {
    const auto v = number_list(a.region, 4, "--region");
    s.moving_region = CellRegion{static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]),
                                 static_cast<int>(v[3])};
  }
  Rng rng(r.cfg.seed);
  const TlfFile f = tlf_from_tracks(generate(s, rng));
  const fs::path path = a.output.empty() ? r.file("synth.tlf") : fs::path(a.output);
  if (!a.output.empty()) r.outputs.push_back(a.output);
  write_tlf(path, f);
  std::cout << "wrote " << path.string() << " (" << f.data.frames << " frames, " << f.data.points() << " tracks)\n";
}

void cmd_rasterize(Run& r, const std::string& in, const std::string& out) {
  const SparseTracks<double> tracks = tracks_from_tlf(read_tlf(in));
  const DenseField<double> dense = rasterize(tracks);
  write_tlf(out, tlf_from_dense(DenseField<float>{dense.points.cast<float>(), dense.stride}));
  r.outputs.push_back(out);
}

void cmd_offsets(Run& r, const std::string& in, const std::string& out, bool invert) {
  const TlfFile f = read_tlf(in);
  if (!f.dense()) throw FormatError("offsets: expected a dense per-pixel field (run rasterize first)");
  TlfFile g = f;
  if (invert) {
    if (f.convention != CoordConvention::offset) throw FormatError("offsets --invert: input is not an offset file");
    g.data = apply_cell_anchors(f.data, 1, f.height, f.width, false);
    g.convention = CoordConvention::absolute_normalized;
  } else {
    if (f.convention != CoordConvention::absolute_normalized)
      throw FormatError("offsets: input must hold absolute normalized coordinates");
    g.data = apply_cell_anchors(f.data, 1, f.height, f.width, true);
    g.convention = CoordConvention::offset;
  }
  write_tlf(out, g);
  r.outputs.push_back(out);
}

void cmd_variance(Run& r, const std::vector<std::string>& files) {
  CsvTable t{{"file", "representation", "ev_x", "ev_y", "ev_mean"}, {}};
  for (const std::string& path : files) {
    const TlfFile f = read_tlf(path);
    const SparseTracks<double> tracks = pixel_tracks(f);
    const GridSeries<double> absolute = normalized_tracks(tracks);
    const GridSeries<double> offsets =
        apply_cell_anchors(absolute, tracks.geometry.stride, tracks.geometry.height, tracks.geometry.width, true);
    for (const auto& [name, series] : {std::pair{"absolute", &absolute}, std::pair{"offset", &offsets}}) {
      const ExplainedVariance ev = explained_variance(*series);
      t.rows.push_back({path, name, format_number(ev.x), format_number(ev.y), format_number((ev.x + ev.y) / 2)});
      std::cout << path << " " << name << " " << show(ev.x) << " " << show(ev.y) << "\n";
    }
  }
  write_csv(r.file("variance.csv"), t);
}

void cmd_train_vae(Run& r) {
  const RunConfig& c = r.cfg;
  Rng data_rng(c.seed * 1000003 + 11);
  const std::vector<OffsetField<double>> train = motion_segments(c.corpus(), c.data.train_scenes, data_rng);
  const std::vector<OffsetField<double>> eval = motion_segments(c.corpus(), c.data.eval_scenes, data_rng);
  TrajectoryVae vae(c.vae, c.seed * 4 + 101);
  const std::vector<VaeLoss> curve = train_vae(vae, train, c.vae_train);
  CsvTable t{{"step", "total", "recon", "temporal", "spatial", "kl"}, {}};
  for (std::size_t i = 0; i < curve.size(); ++i)
    t.rows.push_back({std::to_string(i), format_number(curve[i].total), format_number(curve[i].recon),
                      format_number(curve[i].temporal), format_number(curve[i].spatial), format_number(curve[i].kl)});
  write_csv(r.file("vae_loss.csv"), t);
  write_checkpoint(r.file("vae.trjp"), make_checkpoint("vae", vae.params(), c));
  const VaeLoss ev = eval_vae(vae, eval, c.vae_train.loss);
  const double e = vae_vepe(vae, eval, c.data.stride);
  append_metrics(r, {{"eval_total", ev.total}, {"eval_temporal", ev.temporal}, {"eval_vepe_px", e}});
  std::cout << "vae: " << curve.size() << " steps, eval vepe " << show(e) << " px\n";
}

void cmd_train_flow(Run& r) {
  const RunConfig& c = r.cfg;
  const TrajectoryVae vae(c.vae, load_params(r.out / "vae.trjp", "vae"));
  const FlowData data = encode_flow_dataset(vae, flow_corpus(c, c.data.train_scenes, 21), nullptr, c.invisible_weight);
  const FlowData eval = encode_flow_dataset(vae, flow_corpus(c, c.data.eval_scenes, 22), &data.stats, c.invisible_weight);
  VelocityNet net(c.velocity(), c.seed * 4 + 102);
  const double before = eval_fm_loss(net, eval, c.flow, 7);
  write_curve(r.file("flow_loss.csv"), train_flow(net, data, c.flow));
  const double after = eval_fm_loss(net, eval, c.flow, 7);

  std::vector<VisibilitySample> vis;
  const std::vector<FlowSample> raw = flow_corpus(c, c.data.train_scenes, 21);
  for (std::size_t i = 0; i < raw.size(); ++i)
    vis.push_back({data.samples[i].future, pool_visibility(raw[i].future.points, c.vae.token_grid())});
  VisibilityHead head(c.visibility, c.seed * 4 + 103);
  train_visibility(head, vis, c.visibility_train);

  ParamSet stats;
  stats.add("stats.mean", data.stats.mean);
  stats.add("stats.std", data.stats.std);
  write_checkpoint(r.file("flow.trjp"), make_checkpoint("flow", net.params(), c));
  write_checkpoint(r.file("stats.trjp"), make_checkpoint("stats", stats, c));
  write_checkpoint(r.file("visibility.trjp"), make_checkpoint("visibility", head.params(), c));
  append_metrics(r, {{"eval_fm_initial", before}, {"eval_fm_final", after}, {"visibility_accuracy", visibility_accuracy(head, vis)}});
  std::cout << "flow: eval fm " << show(before) << " -> " << show(after) << "\n";
}

void cmd_finetune(Run& r) {
  const RunConfig& c = r.cfg;
  const TrajectoryVae vae(c.vae, load_params(r.out / "vae.trjp", "vae"));
  const LatentStats stats = load_stats(r.out / "stats.trjp");
  const FlowData data = encode_flow_dataset(vae, flow_corpus(c, c.data.train_scenes, 21), &stats, c.invisible_weight);
  const FlowData eval = encode_flow_dataset(vae, flow_corpus(c, c.data.eval_scenes, 22), &stats, c.invisible_weight);
  VelocityNet net(c.velocity(), load_params(r.out / "flow.trjp", "flow"));
  const double before = endpoint_error(net, eval, 10, 99, c.flow.anchor_sigma, c.flow.anchor);
  write_curve(r.file("finetune_loss.csv"), finetune_onpolicy(net, data, c.finetune));
  const double after = endpoint_error(net, eval, 10, 99, c.flow.anchor_sigma, c.flow.anchor);
  write_checkpoint(r.file("flow_ft.trjp"), make_checkpoint("flow", net.params(), c));
  append_metrics(r, {{"endpoint_error_pretrained", before}, {"endpoint_error_finetuned", after}});
  std::cout << "finetune: endpoint error " << show(before) << " -> " << show(after) << "\n";
}

void cmd_sample(Run& r, const std::string& history, const std::string& flow_ckpt, const std::string& output) {
  const RunConfig& c = r.cfg;
  const TrajectoryVae vae(c.vae, load_params(r.out / "vae.trjp", "vae"));
  fs::path fp = flow_ckpt;
  if (fp.empty()) fp = fs::exists(r.out / "flow_ft.trjp") ? r.out / "flow_ft.trjp" : r.out / "flow.trjp";
  const VelocityNet net(c.velocity(), load_params(fp, "flow"));
  std::optional<VisibilityHead> head;
  if (fs::exists(r.out / "visibility.trjp"))
    head.emplace(c.visibility, load_params(r.out / "visibility.trjp", "visibility"));
  Pipeline pl{&vae, &net, head ? &*head : nullptr, load_stats(r.out / "stats.trjp"), c.flow.anchor_sigma, c.flow.anchor};
  const OffsetField<double> hist = last_frames(offsets_of(read_tlf(history)), c.data.segment);
  const FutureSample s = sample_future(hist, pl, c.sampler, c.seed);
  const fs::path out = output.empty() ? r.file("future.tlf") : fs::path(output);
  if (!output.empty()) r.outputs.push_back(output);
  write_tlf(out, tlf_from_offsets(OffsetField<float>{s.future.points.cast<float>(), c.data.stride}));
  std::cout << "wrote " << out.string() << "\n";
}

void cmd_eval(Run& r, const std::string& metric, const std::string& pred, const std::string& ref, bool single_scaling) {
  const SparseTracks<double> p = pixel_tracks(read_tlf(pred));
  const double s = p.geometry.stride;
  double value;
  if (metric == "flowtv") {
    value = flow_tv(p.points, s);
  } else if (metric == "divcurl") {
    value = div_curl_energy(p.points, s, !single_scaling && r.cfg.metrics.literal_div_curl);
  } else if (metric == "vepe") {
    if (ref.empty()) throw ConfigError("eval --metric vepe needs --ref");
    const SparseTracks<double> g = pixel_tracks(read_tlf(ref));
    value = vepe(p.points.coords, g.points.coords, g.points.mask);
  } else if (metric == "variance") {
    const GridSeries<double> abs = normalized_tracks(p);
    const GridSeries<double> off = apply_cell_anchors(abs, p.geometry.stride, p.geometry.height, p.geometry.width, true);
    const ExplainedVariance a = explained_variance(abs), o = explained_variance(off);
    value = (a.x + a.y) / 2 - (o.x + o.y) / 2;
  } else {
    throw ConfigError("eval: unknown metric '" + metric + "' (flowtv, divcurl, vepe, variance)");
  }
  append_metrics(r, {{metric, value}});
  std::cout << show(value) << "\n";
}

void cmd_camcap(Run& r, const std::string& in) {
  const CameraStats st = estimate_camera(pixel_tracks(read_tlf(in)));
  const std::string phrase = caption(st, r.cfg.caption);
  CsvTable t{{"tx", "ty", "zoom", "roll", "shake", "caption"},
             {{format_number(st.translation.x()), format_number(st.translation.y()), format_number(st.zoom),
               format_number(st.roll), format_number(st.shake), phrase}}};
  write_csv(r.file("camcap.csv"), t);
  std::cout << phrase << "\n";
}

int cmd_gradcheck(Run& r, int seeds) {
  CsvTable t{{"seed", "case", "max_relative_error"}, {}};
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s)
    for (const GradResult& g : run_grad_suite(r.cfg.seed + s)) {
      t.rows.push_back({std::to_string(r.cfg.seed + s), g.name, format_number(g.max_relative_error)});
      worst = std::max(worst, g.max_relative_error);
    }
  write_csv(r.file("gradcheck.csv"), t);
  std::cout << "max relative error " << show(worst) << (worst < 1e-4 ? " (pass)" : " (FAIL)") << "\n";
  return worst < 1e-4 ? exit_ok : exit_numerical;
}

// ---- plot ------------------------------------------------------------------

std::string svg_number(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v;
  return s.str();
}

std::string hue_color(double h) {
  // HSV with s = v = 1.
  const double x = 6.0 * (h - std::floor(h));
  const int i = static_cast<int>(x) % 6;
  const double f = x - std::floor(x);
  double rgb[3];
  const double q = 1 - f, t = f;
  switch (i) {
    case 0: rgb[0] = 1, rgb[1] = t, rgb[2] = 0; break;
    case 1: rgb[0] = q, rgb[1] = 1, rgb[2] = 0; break;
    case 2: rgb[0] = 0, rgb[1] = 1, rgb[2] = t; break;
    case 3: rgb[0] = 0, rgb[1] = q, rgb[2] = 1; break;
    case 4: rgb[0] = t, rgb[1] = 0, rgb[2] = 1; break;
    default: rgb[0] = 1, rgb[1] = 0, rgb[2] = q; break;
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(std::lround(255 * rgb[0])),
                static_cast<int>(std::lround(255 * rgb[1])), static_cast<int>(std::lround(255 * rgb[2])));
  return buf;
}

std::string overlay_svg(const SparseTracks<double>& t) {
  const int w = t.geometry.width, h = t.geometry.height;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"-0.5 -0.5 " << w << " " << h << "\" width=\"" << 16 * w
    << "\" height=\"" << 16 * h << "\">\n";
  s << "<rect x=\"-0.5\" y=\"-0.5\" width=\"" << w << "\" height=\"" << h << "\" fill=\"#111\"/>\n";
  const Index n = t.points.points();
  for (Index p = 0; p < n; ++p) {
    s << "<polyline fill=\"none\" stroke-width=\"0.15\" stroke=\"" << hue_color(0.8 * p / std::max<Index>(n, 1))
      << "\" points=\"";
    bool first = true;
    for (int f = 0; f < t.frames(); ++f) {
      const Index r = Index{f} * n + p;
      if (!t.points.mask[r]) continue;
      s << (first ? "" : " ") << svg_number(t.points.coords(r, 0)) << "," << svg_number(t.points.coords(r, 1));
      first = false;
    }
    s << "\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string curve_svg(const std::vector<double>& y) {
  const double w = 400, h = 200;
  double lo = 0, hi = 1;
  if (!y.empty()) {
    lo = *std::min_element(y.begin(), y.end());
    hi = *std::max_element(y.begin(), y.end());
  }
  if (hi <= lo) hi = lo + 1;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  s << "<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"";
  for (std::size_t i = 0; i < y.size(); ++i)
    s << (i ? " " : "") << svg_number(w * i / std::max<std::size_t>(y.size() - 1, 1)) << ","
      << svg_number(h - h * (y[i] - lo) / (hi - lo));
  s << "\"/>\n</svg>\n";
  return s.str();
}

void write_text(Run& r, const std::string& name, const std::string& text) {
  write_bytes(r.file(name), std::vector<char>(text.begin(), text.end()));
}

void cmd_plot(Run& r, const std::vector<std::string>& runs) {
  CsvTable summary{{"run", "metric", "value"}, {}};
  for (const std::string& dir : runs) {
    if (!fs::is_directory(dir)) throw Error("plot: missing run directory " + dir);
    const std::string tag = fs::path(dir).filename().string().empty() ? fs::path(dir).parent_path().filename().string()
                                                                        : fs::path(dir).filename().string();
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(dir)) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const fs::path& p : entries) {
      const std::string name = p.filename().string();
      if (p.extension() == ".tlf") {
        write_text(r, tag + "_" + p.stem().string() + "_overlay.svg", overlay_svg(pixel_tracks(read_tlf(p))));
      } else if (name.size() > 9 && name.ends_with("_loss.csv")) {
        const CsvTable t = read_csv(p);
        std::vector<double> y;
        for (const auto& row : t.rows) y.push_back(std::stod(row.at(1)));
        write_text(r, tag + "_" + p.stem().string() + ".svg", curve_svg(y));
      } else if (name.ends_with("_metrics.csv")) {
        for (const auto& row : read_csv(p).rows) summary.rows.push_back({tag, row.at(0), row.at(1)});
      }
    }
  }
  write_csv(r.file("summary.csv"), summary);
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"trajloom: trajectory field modelling toolkit"};
  app.require_subcommand(1);
  Common common;

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "generate analytic point tracks");
  common.attach(s_synth);
  s_synth->add_option("--kind", synth.kind, "translation|rotation|zoom|shear|static");
  s_synth->add_option("--vx", synth.vx);
  s_synth->add_option("--vy", synth.vy);
  s_synth->add_option("--omega", synth.omega, "rad/frame");
  s_synth->add_option("--zoom", synth.zoom, "1/frame");
  s_synth->add_option("--shear", synth.shear, "1/frame");
  s_synth->add_option("--frames", synth.frames);
  s_synth->add_option("--height", synth.height);
  s_synth->add_option("--width", synth.width);
  s_synth->add_option("--stride", synth.stride);
  s_synth->add_option("--jitter-x", synth.jitter_x);
  s_synth->add_option("--jitter-y", synth.jitter_y);
  s_synth->add_flag("--jitter-random", synth.jitter_random);
  s_synth->add_option("--occlude", synth.occlusions, "x0,y0,x1,y1,first,last (repeatable)")->allow_extra_args(false);
  s_synth->add_option("--region", synth.region, "row0,col0,row1,col1 moving cells");
  s_synth->add_option("output", synth.output);

  std::string in, out, metric = "flowtv", ref, flow_ckpt;
  bool invert = false, single_scaling = false;
  int seeds = 10;
  std::vector<std::string> files;

  auto* s_rast = app.add_subcommand("rasterize", "sparse pixel tracks -> dense normalized field");
  common.attach(s_rast);
  s_rast->add_option("input", in)->required();
  s_rast->add_option("output", out)->required();

  auto* s_off = app.add_subcommand("offsets", "absolute normalized field <-> grid-anchor offsets");
  common.attach(s_off);
  s_off->add_flag("--invert", invert);
  s_off->add_option("input", in)->required();
  s_off->add_option("output", out)->required();

  auto* s_var = app.add_subcommand("analyze-variance", "variance explained by grid location");
  common.attach(s_var);
  s_var->add_option("files", files)->required();

  auto* s_vae = app.add_subcommand("train-vae", "train the trajectory VAE on synthetic motions");
  common.attach(s_vae);
  auto* s_flow = app.add_subcommand("train-flow", "train the velocity field and visibility head");
  common.attach(s_flow);
  auto* s_ft = app.add_subcommand("finetune", "on-policy K-step fine-tuning");
  common.attach(s_ft);

  auto* s_sample = app.add_subcommand("sample", "generate a future window from a history file");
  common.attach(s_sample);
  s_sample->add_option("--history", in)->required();
  s_sample->add_option("--flow", flow_ckpt, "velocity checkpoint");
  s_sample->add_option("output", out);

  auto* s_eval = app.add_subcommand("eval", "motion metrics on a trajectory file");
  common.attach(s_eval);
  s_eval->add_option("--metric", metric, "flowtv|divcurl|vepe|variance");
  s_eval->add_option("--ref", ref, "reference file for vepe");
  s_eval->add_flag("--single-scaling", single_scaling, "divcurl with one division by the spacing");
  s_eval->add_option("input", in)->required();

  auto* s_cam = app.add_subcommand("camcap", "camera-motion caption");
  common.attach(s_cam);
  s_cam->add_option("input", in)->required();

  auto* s_grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  common.attach(s_grad);
  s_grad->add_option("--seeds", seeds);

  auto* s_plot = app.add_subcommand("plot", "SVG overlays, loss curves and a metric table");
  common.attach(s_plot);
  s_plot->add_option("runs", files)->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_failure;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    Run r = open_run(name, args, common);
    int code = exit_ok;
    if (name == "synth") cmd_synth(r, synth);
    else if (name == "rasterize") cmd_rasterize(r, in, out);
    else if (name == "offsets") cmd_offsets(r, in, out, invert);
    else if (name == "analyze-variance") cmd_variance(r, files);
    else if (name == "train-vae") cmd_train_vae(r);
    else if (name == "train-flow") cmd_train_flow(r);
    else if (name == "finetune") cmd_finetune(r);
    else if (name == "sample") cmd_sample(r, in, flow_ckpt, out);
    else if (name == "eval") cmd_eval(r, metric, in, ref, single_scaling);
    else if (name == "camcap") cmd_camcap(r, in);
    else if (name == "gradcheck") code = cmd_gradcheck(r, seeds);
    else if (name == "plot") cmd_plot(r, files);
    close_run(r);
    return code;
  } catch (const FormatError& e) {
    std::cerr << "error: format: " << e.what() << "\n";
    return exit_format;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return exit_config;
  } catch (const NumericalError& e) {
    std::cerr << "error: numerical: " << e.what() << "\n";
    return exit_numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_failure;
  }
}

}  // namespace trajloom
