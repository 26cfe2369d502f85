#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agpis/data/ruleworld.hpp"

namespace agpis {

// JSONL manifest, one record per line; image paths resolve relative to the
// manifest location.

namespace detail_manifest {

inline nlohmann::ordered_json record_to_json(const ReviewRecord& rec,
                                             const std::vector<std::string>& image_paths) {
  nlohmann::ordered_json j;
  j["sku"] = rec.sku;
  j["images"] = image_paths;
  j["sequence"] = rec.sequence;
  j["title"] = rec.title;
  j["feedback"] = rec.feedback;
  j["label"] = rec.label;
  j["split"] = rec.split;
  nlohmann::ordered_json oracle;
  oracle["primary"] = rec.oracle.true_primary;
  oracle["nc"] = rec.oracle.non_compliant;
  nlohmann::ordered_json dups = nlohmann::ordered_json::array();
  for (auto [a, b] : rec.oracle.dup_pairs) dups.push_back({a, b});
  oracle["dup_pairs"] = dups;
  oracle["violating"] = rec.oracle.violating;
  j["oracle"] = oracle;
  return j;
}

}  // namespace detail_manifest

// writes images as PPM plus the manifest; layout: <dir>/manifest.jsonl and
// <dir>/images/<sku>_<k>.ppm
inline void write_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  std::ofstream mf(fs::path(dir) / "manifest.jsonl");
  if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
  for (const auto& rec : ds.records) {
    std::vector<std::string> paths;
    for (std::size_t k = 0; k < rec.pool.size(); ++k) {
      std::string rel = "images/" + std::to_string(rec.sku) + "_" + std::to_string(k) + ".ppm";
      write_ppm(rec.pool[k], (fs::path(dir) / rel).string());
      paths.push_back(rel);
    }
    mf << detail_manifest::record_to_json(rec, paths).dump() << "\n";
  }
  if (!mf) throw std::runtime_error("short write on manifest in " + dir);
}

// Streaming reader: invokes the callback once per record without keeping
// previous records in memory. load_images=false skips pixel data.
inline void for_each_manifest_record(const std::string& manifest_path, bool load_images,
                                     const std::function<void(ReviewRecord&&)>& fn) {
  namespace fs = std::filesystem;
  std::ifstream mf(manifest_path);
  if (!mf) throw std::runtime_error("cannot read manifest: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::string line;
  long line_no = 0;
  while (std::getline(mf, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("manifest " + manifest_path + " line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    auto fail = [&](const std::string& msg) {
      throw std::runtime_error("manifest " + manifest_path + " line " + std::to_string(line_no) +
                               ": " + msg);
    };
    try {
      ReviewRecord rec;
      rec.sku = j.at("sku").get<std::uint64_t>();
      std::vector<std::string> paths = j.at("images").get<std::vector<std::string>>();
      rec.sequence = j.at("sequence").get<std::vector<int>>();
      rec.title = j.at("title").get<std::vector<int>>();
      rec.feedback = j.at("feedback").get<std::vector<int>>();
      rec.label = j.at("label").get<int>();
      rec.split = j.at("split").get<std::string>();
      const auto& oracle = j.at("oracle");
      rec.oracle.true_primary = oracle.at("primary").get<int>();
      rec.oracle.non_compliant = oracle.at("nc").get<std::vector<int>>();
      for (const auto& p : oracle.at("dup_pairs"))
        rec.oracle.dup_pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
      rec.oracle.violating = oracle.at("violating").get<std::vector<int>>();

      if (rec.label < 0 || rec.label >= kNumRuleClasses)
        fail("class label " + std::to_string(rec.label) + " outside [0, " +
             std::to_string(kNumRuleClasses) + ") for sku " + std::to_string(rec.sku));
      for (int s : rec.sequence)
        if (s < 0 || s >= static_cast<int>(paths.size()))
          fail("sequence index " + std::to_string(s) + " outside candidate pool for sku " +
               std::to_string(rec.sku));
      for (const std::string& p : paths) {
        fs::path full = base / p;
        if (!fs::exists(full))
          fail("missing image file '" + p + "' for sku " + std::to_string(rec.sku));
        if (load_images) rec.pool.push_back(read_ppm(full.string()));
      }
      fn(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    }
  }
}

inline Dataset read_manifest(const std::string& manifest_path, bool load_images = true) {
  Dataset ds;
  for_each_manifest_record(manifest_path, load_images,
                           [&](ReviewRecord&& rec) { ds.records.push_back(std::move(rec)); });
  return ds;
}

}  // namespace agpis
