#pragma once

// Dataset manifests: patients, their snapshot files and a train/holdout
// split. Relative paths resolve against the manifest's directory.

#include <filesystem>
#include <fstream>
#include <set>

#include "aaa/surface/io.hpp"
#include "aaa/temporal/timeline.hpp"

namespace aaa::io {

namespace fs = std::filesystem;

struct SnapshotEntry {
  std::string ply;
  std::string centerline;
  double time = 0.0;
};

struct PatientEntry {
  std::string id;
  std::vector<SnapshotEntry> snapshots;
  std::string field;  // velocity-field checkpoint, empty before fitting
};

struct Manifest {
  std::vector<PatientEntry> patients;
  std::vector<std::string> train;
  std::vector<std::string> holdout;
  fs::path base;  // directory relative paths resolve against

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
  }

  const PatientEntry& patient(const std::string& id) const {
    for (const auto& p : patients) {
      if (p.id == id) return p;
    }
    throw DataError("manifest: unknown patient '" + id + "'");
  }

  // Patients of a split ("train", "holdout" or "all"), in manifest order.
  std::vector<const PatientEntry*> split(const std::string& name) const {
    std::vector<const PatientEntry*> out;
    if (name == "all") {
      for (const auto& p : patients) out.push_back(&p);
      return out;
    }
    const std::vector<std::string>* ids = nullptr;
    if (name == "train") ids = &train;
    else if (name == "holdout") ids = &holdout;
    else throw InvalidArgument("unknown split '" + name + "' (train, holdout, all)");
    for (const auto& id : *ids) out.push_back(&patient(id));
    return out;
  }

  // Paths exist, times strictly increase, split ids are known and unique.
  void validate() const {
    std::set<std::string> ids;
    for (const auto& p : patients) {
      if (p.id.empty()) throw DataError("manifest: empty patient id");
      if (!ids.insert(p.id).second) throw DataError("manifest: duplicate patient '" + p.id + "'");
      if (p.snapshots.empty()) throw DataError("manifest: patient '" + p.id + "' has no snapshots");
      for (std::size_t i = 0; i < p.snapshots.size(); ++i) {
        const auto& s = p.snapshots[i];
        if (i > 0 && !(s.time > p.snapshots[i - 1].time)) {
          throw DataError("manifest: times of '" + p.id + "' must be strictly increasing");
        }
        for (const auto& f : {s.ply, s.centerline}) {
          if (!fs::exists(resolve(f))) throw DataError("manifest: missing file '" + resolve(f).string() + "'");
        }
      }
      if (!p.field.empty() && !fs::exists(resolve(p.field))) {
        throw DataError("manifest: missing file '" + resolve(p.field).string() + "'");
      }
    }
    std::set<std::string> seen;
    for (const auto* list : {&train, &holdout}) {
      for (const auto& id : *list) {
        if (!ids.count(id)) throw DataError("manifest: split names unknown patient '" + id + "'");
        if (!seen.insert(id).second) throw DataError("manifest: patient '" + id + "' listed twice in the split");
      }
    }
  }
};

inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json pats = nlohmann::json::array();
  for (const auto& p : m.patients) {
    nlohmann::json snaps = nlohmann::json::array();
    for (const auto& s : p.snapshots) snaps.push_back({{"ply", s.ply}, {"centerline", s.centerline}, {"time", s.time}});
    nlohmann::json e = {{"id", p.id}, {"snapshots", snaps}};
    if (!p.field.empty()) e["field"] = p.field;
    pats.push_back(e);
  }
  return {{"patients", pats}, {"split", {{"train", m.train}, {"holdout", m.holdout}}}};
}

inline Manifest manifest_from_json(const nlohmann::json& j, const fs::path& base) {
  Manifest m;
  m.base = base;
  try {
    for (const auto& p : j.at("patients")) {
      PatientEntry e;
      e.id = p.at("id").get<std::string>();
      for (const auto& s : p.at("snapshots")) {
        e.snapshots.push_back(
            {s.at("ply").get<std::string>(), s.at("centerline").get<std::string>(), s.at("time").get<double>()});
      }
      e.field = p.value("field", std::string());
      m.patients.push_back(std::move(e));
    }
    if (j.contains("split")) {
      m.train = j.at("split").value("train", std::vector<std::string>{});
      m.holdout = j.at("split").value("holdout", std::vector<std::string>{});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline Manifest read_manifest(const fs::path& path) {
  return manifest_from_json(read_json(path), path.parent_path());
}

// Paths are rewritten relative to the new manifest location.
inline void write_manifest(const fs::path& path, const Manifest& m) {
  Manifest out = m;
  const fs::path dir = fs::absolute(path).parent_path();
  auto rel = [&](const std::string& p) {
    return p.empty() ? p : fs::absolute(m.resolve(p)).lexically_normal().lexically_relative(dir).generic_string();
  };
  for (auto& p : out.patients) {
    for (auto& s : p.snapshots) {
      s.ply = rel(s.ply);
      s.centerline = rel(s.centerline);
    }
    p.field = rel(p.field);
  }
  write_json(path, to_json(out));
}

inline surface::VascularModel load_snapshot(const fs::path& ply, const fs::path& centerline, double time) {
  auto data = surface::read_ply(ply.string());
  surface::VascularModel m;
  m.mesh = std::move(data.mesh);
  if (m.mesh.normals.size() != m.mesh.size()) surface::compute_vertex_normals(m.mesh);
  m.features = std::move(data.features);
  m.centerline = surface::read_centerline(centerline.string());
  m.time = time;
  surface::validate(m.mesh);
  return m;
}

inline temporal::PatientTimeline load_timeline(const Manifest& m, const PatientEntry& p, bool with_field) {
  temporal::PatientTimeline tl;
  tl.id = p.id;
  for (const auto& s : p.snapshots) tl.models.push_back(load_snapshot(m.resolve(s.ply), m.resolve(s.centerline), s.time));
  if (with_field) {
    if (p.field.empty()) throw DataError("patient '" + p.id + "' has no fitted field; run fit-field first");
    tl.field = temporal::VelocityField::from_records(ga::load_checkpoint(m.resolve(p.field).string()));
  }
  return tl;
}

inline std::vector<temporal::PatientTimeline> load_split(const Manifest& m, const std::string& split,
                                                         bool with_field) {
  std::vector<temporal::PatientTimeline> out;
  for (const auto* p : m.split(split)) out.push_back(load_timeline(m, *p, with_field));
  return out;
}

}  // namespace aaa::io
