#include "morphield/scenes.hpp"
#include "morphield/session.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include <unistd.h>

using namespace morphield;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("morphield_session_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

FitOptions cells(int n) {
  FitOptions o;
  o.cells = n;
  return o;
}

// Two-sphere session at 32 cells, fitted once and copied per test.
const EditSession& two_spheres() {
  static const EditSession s = EditSession::from_mesh(make_scene("two_spheres"), "two_spheres", cells(32));
  return s;
}

std::vector<double> probe(const EditSession& s, std::size_t count, std::uint64_t seed) {
  std::vector<double> out;
  for (const Vec3& q : test::random_points(count, seed, 0.0, 1.0)) out.push_back(s.composite()->value(q));
  return out;
}

AddTopology at_saddle(std::size_t index, std::optional<double> rho = {}) {
  AddTopology a;
  a.saddle = index;
  a.rho = rho;
  return a;
}

}  // namespace

TEST(Session, CreateReportsTheFit) {
  const EditSession& s = two_spheres();
  EXPECT_EQ(s.spec().cells(), 32);
  EXPECT_TRUE(s.fit_report().converged);
  EXPECT_LE(s.fit_report().relative_residual, 1e-8);
  EXPECT_EQ(s.fit_report().boundary_edges, 0u);
  ASSERT_GE(s.saddles().size(), 1u);
  EXPECT_EQ(s.revision(), 0u);
  EXPECT_EQ(s.source().sha256.size(), 64u);
  // Scenes are already in unit coordinates with the default margin applied.
  const json saddles = s.saddles_json();
  EXPECT_EQ(saddles[0]["index"], 0);
  EXPECT_NEAR(saddles[0]["flip_beta"].get<double>(), flip_threshold(s.saddles()[0].value), 1e-15);
}

TEST(Session, MissingMeshIsNotFoundAndWritesNothing) {
  TempDir dir;
  try {
    EditSession::create(dir / "missing.obj", cells(8));
    FAIL() << "no error";
  } catch (const SessionError& e) {
    EXPECT_EQ(e.code(), SessionError::Code::not_found);
  }
  EXPECT_TRUE(fs::is_empty(dir.path()));
}

TEST(Session, OptionValidation) {
  const MeshData mesh = make_scene("sphere");
  FitOptions o = cells(8);
  o.margin = 0.0;
  EXPECT_THROW(EditSession::from_mesh(mesh, "sphere", o), SessionError);
  o.margin = 0.1;
  o.keep_coordinates = true;
  MeshData outside = mesh;
  for (Vec3& v : outside.vertices) v *= 3.0;
  EXPECT_THROW(EditSession::from_mesh(outside, "big", o), SessionError);
  EXPECT_NO_THROW(EditSession::from_mesh(mesh, "sphere", o));
}

TEST(Session, SmallGridRoundTripIsBitwise) {
  TempDir dir;
  const fs::path mesh_path = dir / "sphere.obj";
  save_obj(make_scene("sphere"), mesh_path);
  const EditSession s = EditSession::create(mesh_path, cells(8));
  s.save(dir / "a.json");
  ASSERT_TRUE(fs::exists(dir / "a.json.coeff"));
  const EditSession loaded = EditSession::load(dir / "a.json");
  EXPECT_TRUE(std::ranges::equal(loaded.field()->coefficients(), s.field()->coefficients()));
  EXPECT_EQ(loaded.source().sha256, sha256_hex(read_bytes(mesh_path)));
  loaded.save(dir / "b.json");
  EXPECT_EQ(read_bytes(dir / "a.json.coeff"), read_bytes(dir / "b.json.coeff"));
  // Envelopes differ only in the sidecar name.
  json a = json::parse(read_bytes(dir / "a.json")), b = json::parse(read_bytes(dir / "b.json"));
  a["coefficients"].erase("file");
  b["coefficients"].erase("file");
  EXPECT_EQ(a, b);
}

TEST(Session, SaveLoadSaveWithEditsIsBitwise) {
  TempDir dir;
  EditSession s = two_spheres();
  s.apply(at_saddle(0));
  AddGeometry g;
  g.point = Vec3(0.35, 0.62, 0.5);
  s.apply(g);
  Retune r;
  r.id = 1;
  r.rho = 4.0;
  s.apply(r);
  s.save(dir / "s.json");
  const EditSession loaded = EditSession::load(dir / "s.json");
  loaded.save(dir / "s.json");
  const std::string first = read_bytes(dir / "s.json");
  EditSession::load(dir / "s.json").save(dir / "s.json");
  EXPECT_EQ(read_bytes(dir / "s.json"), first);
  EXPECT_EQ(loaded.revision(), s.revision());
  EXPECT_EQ(loaded.next_id(), s.next_id());
  EXPECT_EQ(loaded.history_size(), 0u);
  // Replaying the stored stack reproduces the composite bitwise.
  EXPECT_EQ(probe(loaded, 1000, test::kSeed), probe(s, 1000, test::kSeed));
  for (const fs::directory_entry& e : fs::directory_iterator(dir.path()))
    EXPECT_TRUE(e.path().filename() == "s.json" || e.path().filename() == "s.json.coeff") << e.path();
}

TEST(Session, CorruptSidecarIsRejected) {
  TempDir dir;
  const EditSession s = EditSession::from_mesh(make_scene("sphere"), "sphere", cells(8));
  s.save(dir / "s.json");
  std::string bytes = read_bytes(dir / "s.json.coeff");
  bytes[bytes.size() - 1] ^= 1;
  write_file_atomic(dir / "s.json.coeff", bytes);
  EXPECT_THROW(EditSession::load(dir / "s.json"), SessionError);
  write_file_atomic(dir / "s.json.coeff", bytes.substr(0, 20));
  EXPECT_THROW(EditSession::load(dir / "s.json"), SessionError);
  write_file_atomic(dir / "s.json", "{not json");
  EXPECT_THROW(EditSession::load(dir / "s.json"), SessionError);
  EXPECT_THROW(EditSession::load(dir / "none.json"), SessionError);
}

TEST(Session, ZeroAmplitudeChangesNothing) {
  EditSession s = two_spheres();
  const auto before = probe(s, 2000, test::kSeed + 1);
  const EditResult r = s.apply(at_saddle(0, 0.0));
  EXPECT_FALSE(r.changed.empty());
  EXPECT_EQ(r.revision, 1u);
  EXPECT_EQ(probe(s, 2000, test::kSeed + 1), before);
}

TEST(Session, AddRemoveAndUndoRestoreBitwise) {
  EditSession s = two_spheres();
  const auto base = probe(s, 1000, test::kSeed + 2);
  const EditResult added = s.apply(at_saddle(0));
  ASSERT_TRUE(added.id);
  EXPECT_NE(probe(s, 1000, test::kSeed + 2), base);
  // Every changed value lies inside the reported region.
  const auto edited = probe(s, 1000, test::kSeed + 2);
  const auto points = test::random_points(1000, test::kSeed + 2, 0.0, 1.0);
  for (std::size_t i = 0; i < points.size(); ++i)
    if (edited[i] != base[i]) EXPECT_TRUE(added.changed.contains(points[i]));

  s.apply(Remove{*added.id});
  EXPECT_EQ(probe(s, 1000, test::kSeed + 2), base);
  s.apply(Undo{});
  EXPECT_EQ(probe(s, 1000, test::kSeed + 2), edited);
  s.apply(Undo{});
  EXPECT_EQ(probe(s, 1000, test::kSeed + 2), base);
  EXPECT_EQ(s.revision(), 4u);
}

TEST(Session, RetuneToTheFlipThresholdZeroesTheSaddle) {
  EditSession s = two_spheres();
  const Vec3 p = s.saddles()[0].position;
  const double f = s.field()->value(p);
  const EditResult r = s.apply(at_saddle(0, 5.0));
  EXPECT_LT(s.composite()->value(p), 0.0);
  EXPECT_NEAR(s.composite()->value(p), -13.0 / 27.0 * f, 1e-12);
  Retune t;
  t.id = *r.id;
  t.rho = 3.375;
  s.apply(t);
  EXPECT_NEAR(s.composite()->value(p), 0.0, 1e-12);
  EXPECT_EQ(s.deformers().at(0).params.rho, 3.375);
  EXPECT_EQ(s.deformers().at(0).params.mu, s.params().mu);
}

TEST(Session, RevisionsAndFailedEdits) {
  EditSession s = two_spheres();
  std::uint64_t rev = 0;
  for (int i = 0; i < 5; ++i) EXPECT_EQ(s.apply(at_saddle(0, 1.0 + i)).revision, ++rev);
  const auto before = probe(s, 200, test::kSeed + 3);
  auto expect_code = [&](const EditCommand& c, SessionError::Code code) {
    try {
      s.apply(c);
      ADD_FAILURE() << "no error";
    } catch (const SessionError& e) {
      EXPECT_EQ(e.code(), code) << e.what();
    }
  };
  expect_code(Remove{99}, SessionError::Code::not_found);
  expect_code(at_saddle(99), SessionError::Code::not_found);
  Retune wrong;
  wrong.id = 1;
  wrong.radius = 0.1;
  expect_code(wrong, SessionError::Code::invalid);
  EXPECT_THROW(s.apply(at_saddle(0, -1.0)), DeformerError);
  EXPECT_EQ(s.revision(), rev);
  EXPECT_EQ(s.deformers().size(), 5u);
  EXPECT_EQ(probe(s, 200, test::kSeed + 3), before);
}

TEST(Session, HistoryIsCapped) {
  EditSession s = two_spheres();
  const EditResult first = s.apply(at_saddle(0));
  Retune r;
  r.id = *first.id;
  for (int i = 0; i < 300; ++i) {
    r.rho = 1.0 + 0.01 * i;
    s.apply(r);
  }
  EXPECT_EQ(s.history_size(), kHistoryDepth);
  for (std::size_t i = 0; i < kHistoryDepth; ++i) s.apply(Undo{});
  try {
    s.apply(Undo{});
    FAIL() << "undo past the history";
  } catch (const SessionError& e) {
    EXPECT_EQ(e.code(), SessionError::Code::conflict);
  }
  // The oldest reachable state is the one 256 edits back.
  EXPECT_NEAR(s.deformers().at(0).params.rho, 1.0 + 0.01 * (300 - 256 - 1), 1e-12);
}

TEST(Session, GeometryPickIsSnappedToTheSurface) {
  EditSession s = two_spheres();
  AddGeometry g;
  g.point = Vec3(0.35, 0.5 + 0.125, 0.5);  // slightly outside the sphere
  g.kind = DeformerKind::concavity;
  g.amplitude = 3.0;
  const EditResult r = s.apply(g);
  const Deformer& d = s.deformers().at(0);
  EXPECT_EQ(d.id, *r.id);
  EXPECT_LT(std::abs(s.field()->value(d.anchor)), 1e-4);
  EXPECT_EQ(d.geometry.amplitude, 3.0);
  EXPECT_GT(s.composite()->value(d.anchor), 0.0);
}

TEST(Commands, ParseAndPrint) {
  const json cases[] = {
      json{{"op", "add_topology"}, {"saddle", 2}, {"rho", 4.0}},
      json{{"op", "add_geometry"}, {"point", {0.1, 0.2, 0.3}}, {"kind", "bulge"}, {"radius", 0.05}},
      json{{"op", "retune"}, {"id", 7}, {"mu", 1.5}},
      json{{"op", "remove"}, {"id", 3}},
      json{{"op", "undo"}},
  };
  for (const json& j : cases) EXPECT_EQ(to_json(parse_command(j)), j);
  const EditCommand c = parse_command(cases[0]);
  ASSERT_TRUE(std::holds_alternative<AddTopology>(c));
  EXPECT_EQ(std::get<AddTopology>(c).saddle, 2u);
  EXPECT_FALSE(std::get<AddTopology>(c).mu);

  for (const json& bad : {json{{"op", "twist"}}, json{{"saddle", 1}}, json{{"op", "add_topology"}},
                          json{{"op", "add_topology"}, {"saddle", -1}}, json{{"op", "remove"}, {"id", "x"}},
                          json{{"op", "add_geometry"}, {"point", {0.1, 0.2}}, {"kind", "bulge"}},
                          json{{"op", "add_geometry"}, {"point", {0.1, 0.2, 0.3}}, {"kind", "topology"}},
                          json{{"op", "retune"}, {"id", 1}, {"rho", "high"}}, json::array()})
    EXPECT_THROW(parse_command(bad), SessionError) << bad.dump();
}

TEST(Json, DeformerRoundTripIsExact) {
  EditSession s = two_spheres();
  s.apply(at_saddle(0));
  const Deformer& d = s.deformers().at(0);
  const Deformer back = deformer_from_json(json::parse(to_json(d).dump()));
  EXPECT_EQ(back.anchor, d.anchor);
  EXPECT_EQ(back.frame, d.frame);
  EXPECT_EQ(back.weights, d.weights);
  EXPECT_EQ(back.beta, d.beta);
  EXPECT_EQ(back.params, d.params);
  EXPECT_EQ(back.saddle, d.saddle);
  const CriticalPoint cp = critical_from_json(json::parse(to_json(s.saddles()[0]).dump()));
  EXPECT_EQ(cp.position, s.saddles()[0].position);
  EXPECT_EQ(cp.eigenvectors, s.saddles()[0].eigenvectors);
  EXPECT_EQ(cp.kind, s.saddles()[0].kind);
}

TEST(Files, AtomicWriteLeavesNoTemporaries) {
  TempDir dir;
  write_file_atomic(dir / "x.bin", "first");
  write_file_atomic(dir / "x.bin", "second");
  EXPECT_EQ(read_bytes(dir / "x.bin"), "second");
  EXPECT_EQ(std::distance(fs::directory_iterator(dir.path()), fs::directory_iterator()), 1);
  EXPECT_THROW(write_file_atomic(dir / "missing" / "x.bin", "y"), SessionError);
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sidecar_path("a/b.json"), fs::path("a/b.json.coeff"));
}
