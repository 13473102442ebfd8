#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lig/lig.hpp"

namespace lig::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

struct ShapeRequest {
  std::string kind;
  std::size_t count = 0;
};

/// Parses "kind:count[,kind:count...]" with kind in {sphere, box, random}.
inline std::vector<ShapeRequest> parse_shape_spec(const std::string& spec) {
  std::vector<ShapeRequest> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    ShapeRequest r;
    r.kind = item.substr(0, colon);
    if (r.kind != "sphere" && r.kind != "box" && r.kind != "random")
      throw InvalidArgument("unknown shape kind \"" + r.kind + "\" (expected sphere, box or random)");
    if (colon == std::string::npos) {
      r.count = 1;
    } else {
      const std::string n = item.substr(colon + 1);
      char* end = nullptr;
      const long long v = std::strtoll(n.c_str(), &end, 10);
      if (n.empty() || *end != '\0' || v < 0) throw InvalidArgument("bad shape count in \"" + item + "\"");
      r.count = static_cast<std::size_t>(v);
    }
    out.push_back(r);
  }
  return out;
}

/// Unit-cube shape of the requested kind.
inline AnalyticShape make_shape(const std::string& kind, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto range = [&](double a, double b) { return a + (b - a) * uni(rng); };
  if (kind == "sphere") {
    const double r = range(0.12, 0.38);
    return AnalyticShape::sphere(Point3(range(0.1 + r, 0.9 - r), range(0.1 + r, 0.9 - r), range(0.1 + r, 0.9 - r)), r);
  }
  if (kind == "box") {
    const Vec3 h(range(0.08, 0.38), range(0.08, 0.38), range(0.08, 0.38));
    Point3 c;
    for (int a = 0; a < 3; ++a) c[a] = range(0.1 + h[a], 0.9 - h[a]);
    return AnalyticShape::box(c, h);
  }
  return random_training_shape(rng);
}

struct GenCorpusOptions {
  std::string shapes;
  std::string out;
  CorpusConfig corpus;
  std::uint64_t seed = 0;
};

/// Corpus parts for every requested shape, in request order. Shape i uses seed stream i.
inline std::vector<CorpusPart> generate_corpus(const std::vector<ShapeRequest>& req, const CorpusConfig& cfg,
                                               std::uint64_t seed) {
  std::vector<CorpusPart> parts;
  std::uint64_t index = 0;
  for (const auto& r : req)
    for (std::size_t i = 0; i < r.count; ++i, ++index) {
      Rng rng(mix_seed(seed, 2 * index));
      const AnalyticShape shape = make_shape(r.kind, rng);
      auto p = make_shape_parts(shape, cfg, mix_seed(seed, 2 * index + 1));
      for (auto& q : p) parts.push_back(std::move(q));
    }
  return parts;
}

inline std::vector<int> parse_widths(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (tok.empty() || *end != '\0' || v < 1) throw InvalidArgument("bad hidden layer width \"" + tok + "\"");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw InvalidArgument("at least one hidden layer is required");
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  auto os = bin::open_out(path);
  os << text;
  bin::finish(os, path);
}

/// Runs the command line; returns the process exit code. Diagnostics go to err.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Local implicit grid surface reconstruction toolkit", "lig"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key=value config file (TOML/INI); flags on the command line take precedence");
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all available cores)")->capture_default_str();

  // gen-corpus
  GenCorpusOptions gc;
  auto* c_gen = app.add_subcommand("gen-corpus", "Generate a synthetic part corpus from analytic shapes");
  c_gen->add_option("--shapes", gc.shapes, "Shape list, e.g. sphere:10,box:5,random:100")->required();
  c_gen->add_option("--out", gc.out, "Output corpus file (.ligc)")->required();
  c_gen->add_option("--resolution", gc.corpus.resolution, "SDF grid resolution per unit cube")->capture_default_str();
  c_gen->add_option("--window", gc.corpus.window, "Part window in voxels")->capture_default_str();
  c_gen->add_option("--stride", gc.corpus.stride, "Part stride in voxels")->capture_default_str();
  c_gen->add_option("--samples-per-part", gc.corpus.samples_per_part, "Signed samples per part")->capture_default_str();
  c_gen->add_option("--sigma-voxels", gc.corpus.sigma_voxels, "Sample offset std in voxels")->capture_default_str();
  c_gen->add_option("--uniform-fraction", gc.corpus.uniform_fraction, "Fraction of uniform samples per part")
      ->capture_default_str();
  c_gen->add_option("--seed", gc.seed, "Random seed")->capture_default_str();

  // train
  std::string corpus_path, weights_out, loss_csv, hidden = "128,64,32,32";
  TrainConfig tc;
  tc.steps = 5000;
  tc.batch_parts = 16;
  tc.samples_per_part = 256;
  int latent_dim = 32;
  auto* c_train = app.add_subcommand("train", "Train the decoder and per-part latents on a corpus");
  c_train->add_option("--corpus", corpus_path, "Corpus file from gen-corpus")->required();
  c_train->add_option("--out", weights_out, "Output weights file (.ligw)")->required();
  c_train->add_option("--steps", tc.steps, "Optimization steps")->capture_default_str();
  c_train->add_option("--batch-parts", tc.batch_parts, "Parts per batch")->capture_default_str();
  c_train->add_option("--samples-per-part", tc.samples_per_part, "Samples drawn per part per step")
      ->capture_default_str();
  c_train->add_option("--lr", tc.learning_rate, "Adam learning rate")->capture_default_str();
  c_train->add_option("--latent-penalty", tc.latent_penalty, "Latent norm penalty")->capture_default_str();
  c_train->add_option("--latent-dim", latent_dim, "Latent code length")->capture_default_str();
  c_train->add_option("--hidden", hidden, "Hidden layer widths, comma separated")->capture_default_str();
  c_train->add_option("--loss-csv", loss_csv, "Write the per-step loss as CSV");
  c_train->add_option("--seed", tc.seed, "Random seed")->capture_default_str();

  // shared reconstruction options
  ReconstructConfig rc;
  double part_scale = 0, density = 0;
  std::string points_path, weights_path, mesh_out, grid_out, grid_in, trace_csv;
  auto add_recon_options = [&](CLI::App* c) {
    c->add_option("--input", points_path, "Oriented point cloud (.ply with x,y,z,nx,ny,nz)")->required();
    c->add_option("--weights", weights_path, "Decoder weights file (.ligw)")->required();
    c->add_option("--part-scale", part_scale, "Part scale s in meters (overrides --density)");
    c->add_option("--density", density, "Point density in points per square meter; selects the part scale");
    c->add_option("--voxel-size", rc.voxel_size, "Extraction voxel size (0 = automatic)")->capture_default_str();
    c->add_option("--steps", rc.optim.steps, "Latent optimization steps")->capture_default_str();
    c->add_option("--batch", rc.optim.batch_size, "Signed samples per step")->capture_default_str();
    c->add_option("--lr", rc.optim.learning_rate, "Adam learning rate")->capture_default_str();
    c->add_option("--latent-penalty", rc.optim.latent_penalty, "Latent norm penalty")->capture_default_str();
    c->add_option("--samples-per-point", rc.optim.samples_per_point, "Signed samples per input point")
        ->capture_default_str();
    c->add_option("--sigma", rc.optim.sigma, "Std of sample offsets along normals (m)")->capture_default_str();
    c->add_option("--grid-out", grid_out, "Write the optimized latent grid (.ligg)");
    c->add_option("--trace-csv", trace_csv, "Write step,loss,accuracy per step as CSV");
    c->add_option("--seed", rc.optim.seed, "Random seed")->capture_default_str();
  };
  auto* c_recon = app.add_subcommand("reconstruct", "Reconstruct a mesh from an oriented point cloud");
  add_recon_options(c_recon);
  c_recon->add_option("--out", mesh_out, "Output mesh (.obj or .ply)")->required();
  c_recon->add_option("--grid-in", grid_in, "Skip optimization and extract from this latent grid (.ligg)");

  // postprocess
  PostprocessConfig pc;
  std::string mesh_in, pp_out;
  auto add_pp_options = [&](CLI::App* c) {
    c->add_option("--k", pc.k, "Nearest input points per face")->capture_default_str();
    c->add_option("--threshold", pc.threshold, "Smoothed alignment threshold")->capture_default_str();
    c->add_option("--lambda", pc.lambda, "Diffusion coefficient")->capture_default_str();
    c->add_option("--iterations", pc.iterations, "Smoothing iterations")->capture_default_str();
    c->add_option("--min-area", pc.min_component_area, "Minimum component area")->capture_default_str();
  };
  auto* c_pp = app.add_subcommand("postprocess", "Remove back-faces from a reconstructed mesh");
  c_pp->add_option("--mesh", mesh_in, "Input mesh (.obj or .ply)")->required();
  c_pp->add_option("--points", points_path, "Oriented point cloud the mesh was reconstructed from")->required();
  c_pp->add_option("--out", pp_out, "Output mesh (.obj or .ply)")->required();
  add_pp_options(c_pp);

  // eval
  MetricsConfig mc;
  std::string recon_path, target_path, csv_path, jsonl_path;
  auto add_eval_options = [&](CLI::App* c) {
    c->add_option("--tau", mc.tau, "F-score distance threshold")->capture_default_str();
    c->add_option("--eval-samples", mc.samples, "Surface samples per mesh")->capture_default_str();
    c->add_flag("--object-units", mc.object_units, "Measure in 1/10 of the target's largest extent");
    c->add_option("--csv", csv_path, "Write the report as CSV");
    c->add_option("--jsonl", jsonl_path, "Write the report as JSON lines");
  };
  auto* c_eval = app.add_subcommand("eval", "Compare a reconstruction against a target mesh");
  c_eval->add_option("--recon", recon_path, "Reconstructed mesh")->required();
  c_eval->add_option("--target", target_path, "Target mesh")->required();
  c_eval->add_option("--seed", mc.seed, "Random seed")->capture_default_str();
  add_eval_options(c_eval);

  // pipeline
  std::string raw_out;
  auto* c_pipe = app.add_subcommand("pipeline", "reconstruct, postprocess and eval in one run");
  add_recon_options(c_pipe);
  c_pipe->add_option("--out", mesh_out, "Output postprocessed mesh (.obj or .ply)")->required();
  c_pipe->add_option("--raw-out", raw_out, "Also write the mesh before postprocessing");
  c_pipe->add_option("--target", target_path, "Target mesh for evaluation (omit to skip eval)");
  add_pp_options(c_pipe);
  add_eval_options(c_pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  auto fmt = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };
  auto fixed = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };

  try {
    set_thread_count(threads);

    if (*c_gen) {
      const auto req = parse_shape_spec(gc.shapes);
      std::size_t total = 0;
      for (const auto& r : req) total += r.count;
      if (total == 0) throw InvalidArgument("shape list contains no shapes");
      const auto parts = generate_corpus(req, gc.corpus, gc.seed);
      save_corpus_parts(parts, gc.corpus.window, gc.out);
      out << "shapes " << total << " parts " << parts.size() << '\n';
      return kOk;
    }

    if (*c_train) {
      const auto corpus = load_corpus_parts(corpus_path);
      if (corpus.empty()) throw InvalidArgument(corpus_path + ": corpus has no parts");
      tc.arch.latent_dim = latent_dim;
      tc.arch.hidden = parse_widths(hidden);
      const auto res = train_decoder(corpus, tc);
      save_params(res.params, weights_out);
      if (!loss_csv.empty()) {
        std::ostringstream os;
        os << "step,loss\n";
        for (std::size_t i = 0; i < res.loss_trace.size(); ++i) os << i << ',' << fmt(res.loss_trace[i]) << '\n';
        write_text(loss_csv, os.str());
      }
      out << "parts " << corpus.size() << " steps " << tc.steps << " final loss "
          << fmt(res.loss_trace.empty() ? 0.0 : res.loss_trace.back()) << '\n';
      return kOk;
    }

    if (*c_pp) {
      const auto mesh = load_mesh(mesh_in);
      const auto pts = load_points(points_path);
      const auto cleaned = remove_backfaces(mesh, pts, pc);
      save_mesh(cleaned, pp_out);
      out << "faces " << mesh.num_faces() << " -> " << cleaned.num_faces() << '\n';
      return kOk;
    }

    auto print_report = [&](const MetricsReport& r) {
      out << "Chamfer " << fixed(r.chamfer) << '\n'
          << "Normal " << fixed(r.normal_alignment) << '\n'
          << "F-Score " << fixed(r.fscore) << " (tau " << fmt(r.tau) << ")\n";
      if (!csv_path.empty()) {
        std::ostringstream os;
        write_report_csv(r, os);
        write_text(csv_path, os.str());
      }
      if (!jsonl_path.empty()) {
        std::ostringstream os;
        write_report_jsonl(r, os);
        write_text(jsonl_path, os.str());
      }
    };

    if (*c_eval) {
      const auto recon = load_mesh(recon_path);
      const auto target = load_mesh(target_path);
      print_report(evaluate(recon, target, mc));
      return kOk;
    }

    // reconstruct / pipeline
    const auto params = load_params(weights_path);
    const auto pts = load_points(points_path);
    if (part_scale > 0) {
      rc.part_scale = part_scale;
    } else if (density > 0) {
      rc.part_scale = choose_part_scale(density);
    } else if (part_scale < 0 || density < 0) {
      throw InvalidArgument("part scale and density must be positive");
    }
    out << "part scale " << fmt(rc.part_scale) << '\n';

    TriMesh mesh;
    if (!grid_in.empty()) {
      if (pts.empty()) throw InvalidArgument("empty point cloud");
      const auto grid = load_grid(grid_in, params.latent_dim());
      const double voxel = rc.voxel_size > 0 ? rc.voxel_size : auto_voxel_size(pts);
      mesh = marching_cubes(evaluate_lattice(grid, params, voxel), rc.isolevel);
    } else {
      const auto res = reconstruct(pts, params, rc);
      mesh = res.mesh;
      if (!grid_out.empty()) save_grid(res.grid, grid_out);
      if (!trace_csv.empty()) {
        std::ostringstream os;
        write_trace_csv(res.trace, os);
        write_text(trace_csv, os.str());
      }
      out << "cells " << res.grid.size() << " final loss " << fmt(res.trace.empty() ? 0.0 : res.trace.back().loss)
          << '\n';
    }

    if (*c_recon) {
      save_mesh(mesh, mesh_out);
      out << "faces " << mesh.num_faces() << '\n';
      return kOk;
    }

    if (!raw_out.empty()) save_mesh(mesh, raw_out);
    const auto cleaned = remove_backfaces(mesh, pts, pc);
    save_mesh(cleaned, mesh_out);
    out << "faces " << mesh.num_faces() << " -> " << cleaned.num_faces() << '\n';
    if (!target_path.empty()) print_report(evaluate(cleaned, load_mesh(target_path), mc));
    return kOk;
  } catch (const IoError& e) {
    err << "lig: error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    err << "lig: error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericalError& e) {
    err << "lig: error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "lig: error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace lig::cli
