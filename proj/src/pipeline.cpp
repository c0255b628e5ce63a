// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <numeric>
#include <sstream>

#include "lidarsim/error.hpp"
#include "lidarsim/metrics.hpp"
#include "lidarsim/parallel.hpp"
#include "lidarsim/random.hpp"
#include "lidarsim/synth.hpp"

namespace lidarsim {
namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

std::string digest_path(const fs::path& path) {
  if (fs::is_regular_file(path)) return "fnv1a64:" + hex64(fnv1a64(read_file_bytes(path)));
  if (!fs::is_directory(path)) throw LoadError(path.string(), std::nullopt, "no such file or directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), path));
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& rel : files) {
    h = fnv1a64(rel.generic_string(), h);
    h = fnv1a64(std::string_view("\0", 1), h);
    h = fnv1a64(read_file_bytes(path / rel), h);
  }
  return "fnv1a64:" + hex64(h);
}

StageLog::StageLog(fs::path path, std::string stage) : out_(path), stage_(std::move(stage)) {
  if (!out_) throw LoadError(path.string(), std::nullopt, "cannot open log for writing");
}

void StageLog::event(const std::string& name, Json fields) {
  Json line{{"stage", stage_}, {"level", "info"}, {"event", name}};
  for (auto& [k, v] : fields.items()) line[k] = v;
  out_ << line.dump() << '\n';
  out_.flush();
}

void StageLog::warning(const std::string& code, const std::string& message, Json fields) {
  Json line{{"stage", stage_}, {"level", "warning"}, {"code", code}, {"message", message}};
  for (auto& [k, v] : fields.items()) line[k] = v;
  out_ << line.dump() << '\n';
  out_.flush();
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"reconstruct", "raycast", "raydrop-train", "raydrop-apply",
                                              "synth",       "metrics", "gridsearch"};
  return names;
}

PointCloud frame_scene(const FrameRecord& frame, const BackgroundMap& background,
                       const ObjectLibrary& library) {
  std::vector<Placement> placements;
  for (const auto& box : frame.boxes)
    if (library.count(box.track_id)) placements.push_back({box.track_id, box.transformed(frame.sensor_pose)});
  return compose_scene(background, library, placements).cloud;
}

BeamTable beams_from_cloud(const PointCloud& cloud, double max_range) {
  BeamTable t;
  t.max_range = max_range;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.xyz[i].norm() == 0.0) continue;
    const SphericalDirection d = cartesian_to_spherical(cloud.xyz[i]);
    t.rays.push_back({d.azimuth, d.elevation, std::nullopt});
    t.beam_ids.push_back(cloud.beam_id ? (*cloud.beam_id)[i] : static_cast<std::int32_t>(i));
  }
  return t;
}

ReturnModel load_return_model(const fs::path& path) {
  const Json j = read_json_file(path);
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "mlp") return surrogate_from_json(j);
    if (kind == "table") return LookupTable(param_grid_from_json(j.at("grid")));
    throw LoadError(path.string(), std::nullopt, "unknown model kind '" + kind + "'");
  } catch (const Json::exception& e) {
    throw LoadError(path.string(), std::nullopt, std::string("malformed model: ") + e.what());
  }
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class WorkerScope {
 public:
  explicit WorkerScope(int workers) : previous_(default_workers()) {
    if (workers > 0) set_default_workers(workers);
  }
  ~WorkerScope() { set_default_workers(previous_); }

 private:
  int previous_;
};

struct StageContext {
  const PipelineConfig& config;
  std::string stage;
  fs::path dir;
  StageLog log;
  std::vector<fs::path> inputs;

  fs::path stage_output(const std::string& name) const { return config.paths.output_dir / name; }
};

fs::path require_manifest(const fs::path& p, const std::string& hint) {
  const fs::path m = fs::is_directory(p) ? p / "manifest.json" : p;
  if (!fs::exists(m)) throw LoadError(m.string(), std::nullopt, "missing input; " + hint);
  return m;
}

SequenceDataset read_input_sequence(StageContext& ctx, const fs::path& p, const std::string& hint) {
  const fs::path m = require_manifest(p, hint);
  ctx.inputs.push_back(m.parent_path());
  SequenceDataset seq = read_sequence(m);
  ctx.log.event("read_sequence", {{"path", m.string()}, {"frames", seq.frames.size()}});
  return seq;
}

std::pair<BackgroundMap, ObjectLibrary> read_reconstruction(StageContext& ctx) {
  const fs::path dir = ctx.stage_output("reconstruct");
  if (!fs::exists(dir / "background" / "background.json"))
    throw LoadError((dir / "background").string(), std::nullopt, "missing input; run the reconstruct stage first");
  ctx.inputs.push_back(dir / "background");
  ctx.inputs.push_back(dir / "assets");
  BackgroundMap bg = load_background(dir / "background");
  ObjectLibrary lib = load_object_library(dir / "assets");
  ctx.log.event("read_reconstruction", {{"background_points", bg.cloud.size()}, {"assets", lib.size()}});
  return {std::move(bg), std::move(lib)};
}

std::optional<BeamTable> read_beam_table(StageContext& ctx) {
  if (!ctx.config.paths.beam_table) return std::nullopt;
  ctx.inputs.push_back(*ctx.config.paths.beam_table);
  return load_beam_table(*ctx.config.paths.beam_table);
}

void strip_normals(PointCloud& c) { c.normals.reset(); }

Json stage_reconstruct(StageContext& ctx) {
  const auto& cfg = ctx.config;
  const SequenceDataset seq = read_input_sequence(ctx, cfg.paths.sequence, "check paths.sequence");
  BackgroundMap bg = accumulate_background(seq, cfg.reconstruct);
  bg.provenance.sequence_id = cfg.paths.sequence.parent_path().filename().string();
  ctx.log.event("background", {{"accumulated", bg.provenance.accumulated_points},
                               {"downsampled", bg.provenance.downsampled_points},
                               {"outliers_removed", bg.provenance.outliers_removed},
                               {"points", bg.cloud.size()}});
  const ObjectLibrary lib = build_object_library(seq, cfg.reconstruct);
  for (const auto& [id, a] : lib)
    ctx.log.event("asset", {{"track_id", id},
                            {"points", a.cloud.size()},
                            {"observations", a.provenance.observations},
                            {"icp_applied", a.provenance.icp_applied},
                            {"icp_rejected", a.provenance.icp_rejected}});
  save_background(bg, ctx.dir / "background", cfg.format);
  save_object_library(lib, ctx.dir / "assets", cfg.format);
  const auto samples = pose_samples(seq);
  write_json_file(ctx.dir / "pose_stats.json", to_json(fit_pose_stats(samples)));
  return Json{{"frames", seq.frames.size()}, {"background_points", bg.cloud.size()}, {"assets", lib.size()}};
}

Json stage_raycast(StageContext& ctx) {
  const auto& cfg = ctx.config;
  const SequenceDataset seq = read_input_sequence(ctx, cfg.paths.sequence, "check paths.sequence");
  const auto [bg, lib] = read_reconstruction(ctx);
  const auto fixed_beams = read_beam_table(ctx);

  SequenceDataset out;
  out.sensor_name = seq.sensor_name;
  out.max_range = seq.max_range;
  std::size_t rays = 0, points = 0;
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const FrameRecord& src = seq.frames[f];
    const BeamTable beams = fixed_beams ? *fixed_beams : beams_from_cloud(src.cloud, seq.max_range);
    const PointCloud scene = frame_scene(src, bg, lib);
    SimulatedFrame sim = cfg.raycast_method == RaycastMethod::fpa
                             ? raycast_fpa(scene, src.sensor_pose, beams, cfg.raycast)
                             : raycast_cp(scene, src.sensor_pose, beams, cfg.raycast);
    strip_normals(sim.cloud);
    rays += beams.rays.size();
    points += sim.cloud.size();
    ctx.log.event("frame", {{"frame", f}, {"rays", beams.rays.size()}, {"points", sim.cloud.size()}});
    out.frames.push_back({src.timestamp_us, src.sensor_pose, std::move(sim.cloud), src.boxes});
  }
  write_sequence(out, ctx.dir, cfg.format);
  return Json{{"frames", out.frames.size()},
              {"rays", rays},
              {"points", points},
              {"method", cfg.raycast_method == RaycastMethod::fpa ? "fpa" : "cp"}};
}

std::vector<RayFeature> sequence_features(const SequenceDataset& seq, std::size_t k, std::size_t& skipped) {
  std::vector<RayFeature> all;
  for (const auto& f : seq.frames) {
    if (f.cloud.size() < 3) continue;
    const NormalEstimate est = estimate_normals(f.cloud, std::min(k, f.cloud.size()));
    const FeatureSet fs = ray_features(est.cloud, est.valid);
    skipped += fs.skipped;
    all.insert(all.end(), fs.features.begin(), fs.features.end());
  }
  return all;
}

Json stage_raydrop_train(StageContext& ctx) {
  const auto& cfg = ctx.config;
  const RaydropConfig& rd = cfg.raydrop;
  const SequenceDataset sim = read_input_sequence(ctx, ctx.stage_output("raycast"), "run the raycast stage first");
  const SequenceDataset real = read_input_sequence(ctx, cfg.paths.sequence, "check paths.sequence");
  std::size_t skipped_sim = 0, skipped_real = 0;
  const auto fs_sim = sequence_features(sim, rd.normal_neighbors, skipped_sim);
  const auto fs_real = sequence_features(real, rd.normal_neighbors, skipped_real);
  const ParamVoxelGrid grid = build_param_grid(fs_sim, fs_real, rd.bins, rd.min_sim_count);
  ctx.log.event("param_grid", {{"sim_features", fs_sim.size()},
                               {"real_features", fs_real.size()},
                               {"sim_skipped", skipped_sim},
                               {"real_skipped", skipped_real},
                               {"defined_voxels", grid.defined_count()}});
  write_json_file(ctx.dir / "grid.json", to_json(grid));
  Json summary{{"sim_features", fs_sim.size()},
               {"real_features", fs_real.size()},
               {"defined_voxels", grid.defined_count()},
               {"model", rd.model}};
  if (rd.model == "mlp") {
    const Surrogate s = train_surrogate(grid, rd.mlp, cfg.seed);
    for (std::size_t i = 0; i < s.loss_history.size(); ++i)
      ctx.log.event("loss", {{"epoch", (i + 1) * static_cast<std::size_t>(rd.mlp.record_every)},
                             {"loss", s.loss_history[i]}});
    write_json_file(ctx.dir / "model.json", to_json(s));
    summary["final_loss"] = s.final_loss;
  } else {
    write_json_file(ctx.dir / "model.json", Json{{"kind", "table"}, {"grid", to_json(grid)}});
  }
  return summary;
}

Json stage_raydrop_apply(StageContext& ctx) {
  const auto& cfg = ctx.config;
  const RaydropConfig& rd = cfg.raydrop;
  const SequenceDataset sim = read_input_sequence(ctx, ctx.stage_output("raycast"), "run the raycast stage first");
  const fs::path model_path = ctx.stage_output("raydrop-train") / "model.json";
  if (!fs::exists(model_path))
    throw LoadError(model_path.string(), std::nullopt, "missing input; run the raydrop-train stage first");
  ctx.inputs.push_back(model_path);
  const ReturnModel model = load_return_model(model_path);

  SequenceDataset out;
  out.sensor_name = sim.sensor_name;
  out.max_range = sim.max_range;
  std::size_t in_points = 0, kept = 0, featureless = 0;
  Json frames = Json::array();
  for (std::size_t f = 0; f < sim.frames.size(); ++f) {
    const FrameRecord& src = sim.frames[f];
    SimulatedFrame frame;
    frame.cloud = src.cloud;
    frame.ray_index.resize(src.cloud.size());
    std::iota(frame.ray_index.begin(), frame.ray_index.end(), std::size_t{0});
    frame.hit.assign(src.cloud.size(), 1);
    RaydropResult r = apply_raydrop(frame, model, rd.threshold, rd.mode, splitmix64(cfg.seed + f),
                                    rd.normal_neighbors);
    strip_normals(r.frame.cloud);
    in_points += src.cloud.size();
    kept += r.frame.cloud.size();
    featureless += r.featureless;
    ctx.log.event("frame", {{"frame", f}, {"input", src.cloud.size()}, {"kept", r.frame.cloud.size()}});
    frames.push_back({{"frame", f}, {"input", src.cloud.size()}, {"kept", r.frame.cloud.size()},
                      {"featureless", r.featureless}});
    out.frames.push_back({src.timestamp_us, src.sensor_pose, std::move(r.frame.cloud), src.boxes});
  }
  write_sequence(out, ctx.dir, cfg.format);
  Json stats{{"threshold", rd.threshold},
             {"mode", rd.mode == DropMode::threshold ? "threshold" : "bernoulli"},
             {"input_points", in_points},
             {"kept_points", kept},
             {"featureless_points", featureless},
             {"frames", frames}};
  write_json_file(ctx.dir / "raydrop_stats.json", stats);
  stats.erase("frames");
  return stats;
}

Json stage_synth(StageContext& ctx) {
  const auto& cfg = ctx.config;
  if (!cfg.paths.sensor_spec) throw ConfigError({"paths.sensor_spec: required by the synth stage"});
  const SequenceDataset seq = read_input_sequence(ctx, cfg.paths.sequence, "check paths.sequence");
  const auto [bg, lib] = read_reconstruction(ctx);
  ctx.inputs.push_back(*cfg.paths.sensor_spec);
  const NewSensorSpec spec = sensor_spec_from_json(read_json_file(*cfg.paths.sensor_spec));

  SynthOptions opt;
  opt.raycast = cfg.raycast;
  opt.seed = cfg.seed;
  opt.coverage_tolerance = deg2rad(cfg.synth.coverage_tolerance_deg);
  if (cfg.synth.apply_raydrop) {
    const fs::path model_path = ctx.stage_output("raydrop-train") / "model.json";
    if (!fs::exists(model_path))
      throw LoadError(model_path.string(), std::nullopt, "missing input; run the raydrop-train stage first");
    ctx.inputs.push_back(model_path);
    opt.raydrop = RaydropStage{load_return_model(model_path), cfg.raydrop.threshold, cfg.raydrop.mode};
  }
  const SynthResult res = synthesize_dataset(seq, spec, bg, lib, opt);
  write_sequence(res.dataset, ctx.dir, cfg.format);
  std::ofstream w(ctx.dir / "warnings.jsonl");
  for (const auto& warn : res.warnings) {
    w << to_json(warn).dump() << '\n';
    ctx.log.warning(warn.code, warn.message, {{"frame", warn.frame}});
  }
  std::size_t points = 0;
  for (const auto& f : res.dataset.frames) points += f.cloud.size();
  return Json{{"frames", res.dataset.frames.size()},
              {"points", points},
              {"warnings", res.warnings.size()},
              {"sensor", spec.name}};
}

Json stage_metrics(StageContext& ctx) {
  const auto& cfg = ctx.config;
  fs::path sim_path;
  if (cfg.paths.sim_sequence)
    sim_path = *cfg.paths.sim_sequence;
  else if (fs::exists(ctx.stage_output("raydrop-apply") / "manifest.json"))
    sim_path = ctx.stage_output("raydrop-apply");
  else
    sim_path = ctx.stage_output("raycast");
  const SequenceDataset sim = read_input_sequence(ctx, sim_path, "run the raycast stage or set paths.sim_sequence");
  const SequenceDataset real = read_input_sequence(ctx, cfg.paths.real_sequence.value_or(cfg.paths.sequence),
                                                   "check paths.real_sequence");
  if (sim.frames.size() != real.frames.size())
    throw DomainError("simulated and real sequences differ in frame count (" + std::to_string(sim.frames.size()) +
                      " vs " + std::to_string(real.frames.size()) + ")");
  const DefaultExtractor extractor(cfg.metrics.voxel, cfg.metrics.crop_extent);
  std::vector<LpcsPair> pairs;
  for (std::size_t f = 0; f < sim.frames.size(); ++f)
    pairs.push_back({sim.frames[f].cloud, real.frames[f].cloud, real.frames[f].boxes});
  const LpcsReport report = evaluate_lpcs(pairs, extractor);

  Json frames = Json::array();
  double chamfer_sum = 0.0;
  std::size_t chamfer_n = 0;
  std::ostringstream txt, csv;
  txt << "frame  sim_points  real_points  lpcs  chamfer\n";
  csv << "frame,sim_points,real_points,lpcs,chamfer\n";
  csv.precision(17);
  for (std::size_t f = 0; f < pairs.size(); ++f) {
    Json row{{"frame", f},
             {"sim_points", pairs[f].sim.size()},
             {"real_points", pairs[f].real.size()},
             {"lpcs", report.values[f]}};
    std::string cd = "";
    if (!pairs[f].sim.empty() && !pairs[f].real.empty()) {
      const double c = chamfer(pairs[f].sim, pairs[f].real);
      row["chamfer"] = c;
      chamfer_sum += c;
      ++chamfer_n;
      std::ostringstream os;
      os.precision(17);
      os << c;
      cd = os.str();
    } else {
      row["chamfer"] = nullptr;
      ctx.log.warning("empty_frame", "chamfer skipped for an empty cloud", {{"frame", f}});
    }
    txt << f << "  " << pairs[f].sim.size() << "  " << pairs[f].real.size() << "  " << report.values[f] << "  "
        << (cd.empty() ? "-" : cd) << '\n';
    csv << f << ',' << pairs[f].sim.size() << ',' << pairs[f].real.size() << ',' << report.values[f] << ','
        << cd << '\n';
    frames.push_back(std::move(row));
  }
  Json out{{"extractor", report.extractor},
           {"extractor_parameters", extractor.parameters()},
           {"lpcs_mean", report.mean},
           {"chamfer_mean", chamfer_n ? Json(chamfer_sum / static_cast<double>(chamfer_n)) : Json(nullptr)},
           {"pairs", report.pairs},
           {"frames", frames}};
  write_json_file(ctx.dir / "report.json", out);
  write_file_bytes(ctx.dir / "report.txt", txt.str());
  write_file_bytes(ctx.dir / "report.csv", csv.str());
  out.erase("frames");
  return out;
}

Json stage_gridsearch(StageContext& ctx) {
  const auto& cfg = ctx.config;
  const SequenceDataset seq = read_input_sequence(ctx, cfg.paths.sequence, "check paths.sequence");
  const auto [bg, lib] = read_reconstruction(ctx);
  const auto fixed_beams = read_beam_table(ctx);
  std::vector<RaycastPair> pairs;
  const std::size_t n = std::min(cfg.gridsearch.max_frames, seq.frames.size());
  for (std::size_t f = 0; f < n; ++f) {
    const FrameRecord& fr = seq.frames[f];
    pairs.push_back({frame_scene(fr, bg, lib), fr.sensor_pose,
                     fixed_beams ? *fixed_beams : beams_from_cloud(fr.cloud, seq.max_range), fr.cloud,
                     fr.boxes});
  }
  std::vector<RaycastConfig> candidates;
  for (int w : cfg.gridsearch.widths)
    for (int h : cfg.gridsearch.heights)
      for (double pw : cfg.gridsearch.peak_widths)
        for (double ip : cfg.gridsearch.idw_powers) {
          RaycastConfig c = cfg.raycast;
          c.width = w;
          c.height = h;
          c.peak_width = pw;
          c.idw_power = ip;
          candidates.push_back(c);
        }
  const DefaultExtractor extractor(cfg.metrics.voxel, cfg.metrics.crop_extent);
  const auto ranking = rank_raycast_configs(candidates, pairs, extractor);
  for (const auto& e : ranking) {
    if (!e.score) ctx.log.warning("candidate_failed", e.error, {{"config", to_json(e.config)}});
  }
  write_json_file(ctx.dir / "ranking.json", to_json(std::span<const RankEntry>(ranking)));
  write_file_bytes(ctx.dir / "ranking.txt", ranking_table(ranking));
  write_file_bytes(ctx.dir / "ranking.csv", ranking_csv(ranking));
  Json best = ranking.front().score ? to_json(ranking.front().config) : Json(nullptr);
  return Json{{"candidates", ranking.size()},
              {"frames", n},
              {"best", best},
              {"best_score", ranking.front().score ? Json(*ranking.front().score) : Json(nullptr)}};
}

}  // namespace

StageResult run_stage(const std::string& stage, const PipelineConfig& config) {
  const auto& names = stage_names();
  if (std::find(names.begin(), names.end(), stage) == names.end())
    throw ConfigError({"stage: unknown stage '" + stage + "'"});
  config.validate();
  WorkerScope workers(config.workers);

  const fs::path dir = config.paths.output_dir / stage;
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir);
  const std::string started = utc_now();
  StageContext ctx{config, stage, dir, StageLog(dir / "log.jsonl", stage), {}};
  const Json cfg_json = config.to_json();
  ctx.log.event("start", {{"config_hash", "fnv1a64:" + hex64(fnv1a64(cfg_json.dump()))}, {"seed", config.seed}});

  Json summary;
  if (stage == "reconstruct") summary = stage_reconstruct(ctx);
  else if (stage == "raycast") summary = stage_raycast(ctx);
  else if (stage == "raydrop-train") summary = stage_raydrop_train(ctx);
  else if (stage == "raydrop-apply") summary = stage_raydrop_apply(ctx);
  else if (stage == "synth") summary = stage_synth(ctx);
  else if (stage == "metrics") summary = stage_metrics(ctx);
  else summary = stage_gridsearch(ctx);
  ctx.log.event("done", summary);

  Json inputs = Json::array();
  for (const auto& p : ctx.inputs) inputs.push_back({{"path", p.string()}, {"digest", digest_path(p)}});
  Json outputs = Json::array();
  std::vector<fs::path> produced;
  for (const auto& e : fs::directory_iterator(dir)) produced.push_back(e.path());
  std::sort(produced.begin(), produced.end());
  for (const auto& p : produced) {
    const std::string name = p.filename().string();
    if (name == "run_manifest.json" || name == "log.jsonl") continue;
    outputs.push_back({{"path", name}, {"digest", digest_path(p)}});
  }
  write_json_file(dir / "run_manifest.json",
                  Json{{"tool", "lidarsim"},
                       {"version", LIDARSIM_VERSION},
                       {"stage", stage},
                       {"config_hash", "fnv1a64:" + hex64(fnv1a64(cfg_json.dump()))},
                       {"config", cfg_json},
                       {"seed", config.seed},
                       {"workers", default_workers()},
                       {"inputs", inputs},
                       {"outputs", outputs},
                       {"started_at", started},
                       {"finished_at", utc_now()}});
  return {stage, dir, summary};
}

}  // namespace lidarsim
