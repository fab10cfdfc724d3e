// morphield command-line front end.

#include "morphield/metrics.hpp"
#include "morphield/parallel.hpp"
#include "morphield/scenes.hpp"
#include "morphield/service.hpp"
#include "morphield/session.hpp"
#include "morphield/surfacing.hpp"

#include <fmt/core.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>

#include "CLI11.hpp"

namespace {

using namespace morphield;
using nlohmann::json;

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  write_file_atomic(path, text);
}

json topology_json(const TopologyReport& t) {
  json genus = json::array();
  for (const auto& g : t.genus_per_component) genus.push_back(g ? json(*g) : json(nullptr));
  return {{"components", t.component_count},
          {"genus", genus},
          {"boundary_edges", t.boundary_edges},
          {"non_manifold_edges", t.non_manifold_edges},
          {"inconsistent_edges", t.inconsistent_edges}};
}

std::vector<EditCommand> read_commands(const std::string& path) {
  const std::string text = read_bytes(path);
  std::vector<EditCommand> out;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error&) {
    // One command per line.
    std::istringstream lines(text);
    std::string line;
    int number = 0;
    while (std::getline(lines, line)) {
      ++number;
      if (line.find_first_not_of(" \t\r") == std::string::npos || line.starts_with("#")) continue;
      try {
        out.push_back(parse_command(json::parse(line)));
      } catch (const std::exception& e) {
        throw SessionError(fmt::format("{}:{}: {}", path, number, e.what()));
      }
    }
    return out;
  }
  if (doc.is_object()) doc = json::array({doc});
  for (const auto& c : doc) out.push_back(parse_command(c));
  return out;
}

std::pair<int, int> parse_size(const std::string& text) {
  static const std::regex pattern(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) throw CLI::ValidationError("--size", "expected WxH, e.g. 256x256");
  return {std::stoi(m[1]), std::stoi(m[2])};
}

void print_fit(const EditSession& s) {
  const auto& f = s.fit_report();
  fmt::print("grid n={} ({} coefficients), spacing {:.6g}\n", s.spec().cells(), s.spec().vertex_count(),
             s.spec().spacing());
  fmt::print("fit: residual {:.3e} after {} CG iterations{}\n", f.relative_residual, f.iterations,
             f.converged ? "" : " (NOT converged)");
  fmt::print("timings: sample {:.3f} s, solve {:.3f} s, search {:.3f} s\n", f.sample_seconds, f.solve_seconds,
             f.search_seconds);
  fmt::print("critical points: {}, saddles: {}\n", s.criticals().size(), s.saddles().size());
  for (std::size_t i = 0; i < s.saddles().size(); ++i) {
    const auto& c = s.saddles()[i];
    fmt::print("  [{}] {} at ({:.4f}, {:.4f}, {:.4f}) F={:.5f}\n", i, to_string(c.kind), c.position.x(),
               c.position.y(), c.position.z(), c.value);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topology-aware implicit shape editing"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (overrides MORPHIELD_THREADS)")->check(CLI::NonNegativeNumber);

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a spline field to a mesh and search its saddles");
  std::string fit_input, fit_scene, fit_out;
  FitOptions fit_opts;
  auto* fit_input_opt = fit->add_option("--input", fit_input, "OBJ or STL mesh");
  fit->add_option("--scene", fit_scene, "Built-in scene instead of a file")->excludes(fit_input_opt);
  fit->add_option("--n", fit_opts.cells, "Grid cells per axis")->check(CLI::Range(GridSpec::kMinCells, 1024));
  fit->add_option("--margin", fit_opts.margin, "Normalization margin")->check(CLI::Range(0.0, 0.49));
  fit->add_flag("--keep-coordinates", fit_opts.keep_coordinates, "Use the mesh coordinates as unit-cube coordinates");
  fit->add_option("--tol", fit_opts.cg.tolerance, "CG relative residual tolerance");
  fit->add_option("--boundary-band", fit_opts.search.boundary_band, "Cells next to the cube faces left unsearched")
      ->check(CLI::NonNegativeNumber);
  fit->add_option("--mu", fit_opts.params.mu, "Default mu for topology deformers");
  fit->add_option("--phi", fit_opts.params.phi, "Default phi");
  fit->add_option("--rho", fit_opts.params.rho, "Default rho");
  fit->add_option("--out", fit_out, "Session file")->required();

  // scene
  auto* scene = app.add_subcommand("scene", "Write a built-in test scene as OBJ");
  std::string scene_name, scene_out;
  scene->add_option("--name", scene_name, "sphere, two_spheres, torus or bridge")->required();
  scene->add_option("--out", scene_out, "OBJ path")->required();

  // saddles
  auto* saddles = app.add_subcommand("saddles", "List saddles (or all critical points) of a session");
  std::string saddles_session, saddles_out = "-";
  bool all_criticals = false;
  saddles->add_option("--session", saddles_session)->required();
  saddles->add_flag("--all-criticals", all_criticals, "Include minima, maxima and degenerate points");
  saddles->add_option("--out", saddles_out, "JSON path, - for stdout");

  // edit
  auto* edit = app.add_subcommand("edit", "Apply a command file to a session");
  std::string edit_session, edit_commands, edit_out;
  edit->add_option("--session", edit_session)->required();
  edit->add_option("--commands", edit_commands, "JSON array, single object, or one JSON command per line")->required();
  edit->add_option("--out", edit_out, "Output session (default: overwrite)");

  // render
  auto* render_cmd = app.add_subcommand("render", "Sphere-trace the edited surface to a PNG");
  std::string render_session, render_out, render_size = "256x256", render_depth;
  std::vector<double> cam;
  double fov = 45.0;
  render_cmd->add_option("--session", render_session)->required();
  render_cmd->add_option("--cam", cam, "Eye and target: ex ey ez tx ty tz (unit-cube coordinates)")->expected(6);
  render_cmd->add_option("--size", render_size, "WxH");
  render_cmd->add_option("--fov", fov, "Vertical field of view in degrees");
  render_cmd->add_option("--depth", render_depth, "Also write float32 depth");
  render_cmd->add_option("--out", render_out, "PNG path")->required();

  // export
  auto* export_cmd = app.add_subcommand("export", "Extract the edited surface as OBJ in model coordinates");
  std::string export_session, export_out;
  int export_res = 128;
  export_cmd->add_option("--session", export_session)->required();
  export_cmd->add_option("--res", export_res, "Lattice cells per axis")->check(CLI::Range(8, 1024));
  export_cmd->add_option("--out", export_out, "OBJ path")->required();

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Compare two meshes");
  std::string metrics_a, metrics_b, metrics_out = "-";
  MetricOptions metric_opts;
  metrics->add_option("--a", metrics_a)->required();
  metrics->add_option("--b", metrics_b)->required();
  metrics->add_option("--samples", metric_opts.samples)->check(CLI::PositiveNumber);
  metrics->add_option("--seed", metric_opts.seed);
  metrics->add_option("--threshold", metric_opts.threshold, "F-score distance threshold")->check(CLI::PositiveNumber);
  metrics->add_option("--out", metrics_out, "JSON path, - for stdout");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve a session over HTTP and WebSocket");
  std::string serve_session, bind = "127.0.0.1:8080";
  ServiceOptions serve_opts;
  serve->add_option("--session", serve_session)->required();
  serve->add_option("--bind", bind, "host:port");
  serve->add_option("--io-threads", serve_opts.io_threads)->check(CLI::PositiveNumber);
  serve->add_option("--render-threads", serve_opts.render_threads)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) set_worker_count(static_cast<std::size_t>(threads));

  try {
    if (*fit) {
      EditSession s = [&] {
        if (!fit_scene.empty()) return EditSession::from_mesh(make_scene(fit_scene), "scene:" + fit_scene, fit_opts);
        if (fit_input.empty()) throw CLI::ValidationError("fit", "give --input or --scene");
        return EditSession::create(fit_input, fit_opts);
      }();
      if (s.fit_report().boundary_edges || s.fit_report().non_manifold_edges)
        fmt::print(stderr, "warning: mesh is not watertight ({} boundary, {} non-manifold edges); signs are best-effort\n",
                   s.fit_report().boundary_edges, s.fit_report().non_manifold_edges);
      if (!s.fit_report().converged) fmt::print(stderr, "warning: CG stopped before reaching the tolerance\n");
      s.save(fit_out);
      print_fit(s);
      fmt::print("wrote {}\n", fit_out);
    } else if (*scene) {
      save_obj(make_scene(scene_name), scene_out);
    } else if (*saddles) {
      const EditSession s = EditSession::load(saddles_session);
      json out = s.saddles_json();
      if (all_criticals) {
        out = json::array();
        for (const auto& c : s.criticals()) out.push_back(to_json(c));
      }
      write_text(saddles_out, out.dump(2) + "\n");
    } else if (*edit) {
      EditSession s = EditSession::load(edit_session);
      for (const auto& cmd : read_commands(edit_commands)) {
        const EditResult r = s.apply(cmd);
        fmt::print("revision {}: {}", r.revision, to_json(cmd).dump());
        if (!r.changed.empty())
          fmt::print("  changed [{:.4f} {:.4f} {:.4f}]-[{:.4f} {:.4f} {:.4f}]", r.changed.lo.x(), r.changed.lo.y(),
                     r.changed.lo.z(), r.changed.hi.x(), r.changed.hi.y(), r.changed.hi.z());
        fmt::print("\n");
      }
      s.save(edit_out.empty() ? edit_session : edit_out);
    } else if (*render_cmd) {
      const EditSession s = EditSession::load(render_session);
      RenderParams params;
      std::tie(params.width, params.height) = parse_size(render_size);
      if (!cam.empty()) {
        params.camera.position = Vec3(cam[0], cam[1], cam[2]);
        params.camera.look_at = Vec3(cam[3], cam[4], cam[5]);
      }
      params.camera.fov_degrees = fov;
      params.validate();
      const RenderedFrame frame = render(*s.composite(), params);
      write_png(render_out, frame.width, frame.height, frame.rgba);
      if (!render_depth.empty()) {
        std::string bytes(reinterpret_cast<const char*>(frame.depth.data()), frame.depth.size() * sizeof(float));
        write_file_atomic(render_depth, bytes);
      }
      fmt::print("revision {}: {}x{} in {:.1f} ms\n", s.revision(), frame.width, frame.height, frame.milliseconds);
    } else if (*export_cmd) {
      const EditSession s = EditSession::load(export_session);
      const MeshData mesh = extract_mesh(*s.composite(), export_res);
      if (mesh.empty()) fmt::print(stderr, "warning: the surface is empty at this resolution\n");
      save_obj(mesh, export_out, &s.transform());
      fmt::print("{} vertices, {} triangles\n", mesh.vertices.size(), mesh.triangles.size());
    } else if (*metrics) {
      const MeshData a = load_mesh(metrics_a), b = load_mesh(metrics_b);
      const MetricsReport r = evaluate_metrics(a, b, metric_opts);
      const json out = {{"chamfer_l1", r.chamfer},
                        {"f_score", r.f_score},
                        {"normal_consistency", r.normal_consistency},
                        {"topology_a", topology_json(r.topology_a)},
                        {"topology_b", topology_json(r.topology_b)},
                        {"samples", r.options.samples},
                        {"seed", r.options.seed},
                        {"threshold", r.options.threshold}};
      write_text(metrics_out, out.dump(2) + "\n");
    } else if (*serve) {
      const auto colon = bind.rfind(':');
      if (colon == std::string::npos) throw CLI::ValidationError("--bind", "expected host:port");
      serve_opts.address = bind.substr(0, colon);
      serve_opts.port = static_cast<unsigned short>(std::stoi(bind.substr(colon + 1)));

      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);

      auto host = std::make_shared<SessionHost>(EditSession::load(serve_session), serve_session);
      Service service(host, serve_opts);
      service.start();
      fmt::print("serving {} on http://{}:{}/v1 (revision {})\n", serve_session, serve_opts.address, service.port(),
                 host->latest().revision);
      std::fflush(stdout);
      int received = 0;
      sigwait(&signals, &received);
      service.stop();
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
