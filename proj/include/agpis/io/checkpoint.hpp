#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "agpis/model/muisc.hpp"
#include "agpis/train/trainer.hpp"

namespace agpis {

// Checkpoint layout: "MUISC1" magic line, key=value config block terminated
// by a blank line, then per parameter a "name rows cols" line followed by
// rows*cols little-endian float32, then an "END" line.

namespace detail_ckpt {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_params(std::ostream& os, const ParamStore& ps, const std::string& prefix) {
  for (const auto& [name, t] : ps.params) {
    os << prefix << name << " " << t.rows() << " " << t.cols() << "\n";
    std::vector<float> buf(t.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.data()[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
}

inline std::map<std::string, std::string> read_header(std::istream& is, const std::string& path) {
  std::string magic;
  if (!std::getline(is, magic) || magic != "MUISC1")
    throw std::runtime_error("checkpoint " + path + ": unknown magic '" + magic + "'");
  std::map<std::string, std::string> config;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) return config;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("checkpoint " + path + ": malformed config line '" + line + "'");
    config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  throw std::runtime_error("checkpoint " + path + ": truncated config block");
}

// loads entries until END, validating each against the expected store
inline void read_params(std::istream& is, ParamStore& ps, const std::string& prefix,
                        const std::string& path) {
  std::size_t filled = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line == "END") {
      if (filled != ps.params.size())
        throw std::runtime_error("checkpoint " + path + ": " + std::to_string(filled) + " of " +
                                 std::to_string(ps.params.size()) + " parameters present");
      return;
    }
    std::istringstream ls(line);
    std::string name;
    int rows = 0, cols = 0;
    if (!(ls >> name >> rows >> cols))
      throw std::runtime_error("checkpoint " + path + ": malformed entry line '" + line + "'");
    if (name.rfind(prefix, 0) != 0)
      throw std::runtime_error("checkpoint " + path + ": unexpected entry '" + name + "'");
    auto it = ps.params.find(name.substr(prefix.size()));
    if (it == ps.params.end())
      throw std::runtime_error("checkpoint " + path + ": unknown parameter '" + name + "'");
    Tensor& t = it->second;
    if (t.rows() != rows || t.cols() != cols)
      throw std::runtime_error("checkpoint " + path + ": parameter '" + name + "' has shape [" +
                               std::to_string(rows) + "x" + std::to_string(cols) +
                               "], expected " + t.shape_str());
    std::vector<float> buf(t.size());
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (is.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
      throw std::runtime_error("checkpoint " + path + ": truncated payload for '" + name + "'");
    for (std::size_t i = 0; i < buf.size(); ++i) t.data()[i] = static_cast<double>(buf[i]);
    ++filled;
  }
  throw std::runtime_error("checkpoint " + path + ": missing END marker");
}

inline std::string get(const std::map<std::string, std::string>& m, const std::string& k,
                       const std::string& path) {
  auto it = m.find(k);
  if (it == m.end())
    throw std::runtime_error("checkpoint " + path + ": missing config key '" + k + "'");
  return it->second;
}

}  // namespace detail_ckpt

inline std::map<std::string, std::string> muisc_config_map(const MuiscConfig& c) {
  using detail_ckpt::fmt_double;
  std::map<std::string, std::string> m;
  m["kind"] = "muisc";
  m["patch"] = std::to_string(c.patch);
  m["img_h"] = std::to_string(c.img_h);
  m["img_w"] = std::to_string(c.img_w);
  m["dim"] = std::to_string(c.dim);
  m["heads"] = std::to_string(c.heads);
  m["enc_blocks"] = std::to_string(c.enc_blocks);
  m["fusion_blocks"] = std::to_string(c.fusion_blocks);
  m["dec_blocks"] = std::to_string(c.dec_blocks);
  m["vocab"] = std::to_string(c.vocab);
  m["num_classes"] = std::to_string(c.num_classes);
  m["seq_len"] = std::to_string(c.seq_len);
  m["max_text"] = std::to_string(c.max_text);
  m["lambda_nlg"] = fmt_double(c.lambda_nlg);
  m["lambda_mcc"] = fmt_double(c.lambda_mcc);
  m["hierarchical_fusion"] = c.hierarchical_fusion ? "1" : "0";
  m["use_decoder"] = c.use_decoder ? "1" : "0";
  m["nlg_task"] = c.nlg_task ? "1" : "0";
  m["title_input"] = c.title_input ? "1" : "0";
  std::string mask;
  for (bool b : c.mhca_present) mask += b ? '1' : '0';
  m["mhca_present"] = mask;
  return m;
}

inline MuiscConfig muisc_config_from_map(const std::map<std::string, std::string>& m,
                                         const std::string& path) {
  using detail_ckpt::get;
  MuiscConfig c;
  c.patch = std::stoi(get(m, "patch", path));
  c.img_h = std::stoi(get(m, "img_h", path));
  c.img_w = std::stoi(get(m, "img_w", path));
  c.dim = std::stoi(get(m, "dim", path));
  c.heads = std::stoi(get(m, "heads", path));
  c.enc_blocks = std::stoi(get(m, "enc_blocks", path));
  c.fusion_blocks = std::stoi(get(m, "fusion_blocks", path));
  c.dec_blocks = std::stoi(get(m, "dec_blocks", path));
  c.vocab = std::stoi(get(m, "vocab", path));
  c.num_classes = std::stoi(get(m, "num_classes", path));
  c.seq_len = std::stoi(get(m, "seq_len", path));
  c.max_text = std::stoi(get(m, "max_text", path));
  c.lambda_nlg = std::stod(get(m, "lambda_nlg", path));
  c.lambda_mcc = std::stod(get(m, "lambda_mcc", path));
  c.hierarchical_fusion = get(m, "hierarchical_fusion", path) == "1";
  c.use_decoder = get(m, "use_decoder", path) == "1";
  c.nlg_task = get(m, "nlg_task", path) == "1";
  c.title_input = get(m, "title_input", path) == "1";
  for (char ch : get(m, "mhca_present", path)) c.mhca_present.push_back(ch == '1');
  c.validate();
  return c;
}

inline void save_muisc_checkpoint(const MuiscWeights& w, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os << "MUISC1\n";
  for (const auto& [k, v] : muisc_config_map(w.cfg)) os << k << "=" << v << "\n";
  os << "\n";
  detail_ckpt::write_params(os, w.store, "");
  os << "END\n";
  if (!os) throw std::runtime_error("short write on checkpoint: " + path);
}

inline MuiscWeights load_muisc_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
  auto config = detail_ckpt::read_header(is, path);
  if (detail_ckpt::get(config, "kind", path) != "muisc")
    throw std::runtime_error("checkpoint " + path + ": not a muisc checkpoint");
  MuiscConfig cfg = muisc_config_from_map(config, path);
  Rng rng(0);
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  detail_ckpt::read_params(is, w.store, "", path);
  return w;
}

inline void save_stage1_checkpoint(const Stage1Models& models, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  const BinaryClassifierConfig& c = models.primary.cfg;
  os << "MUISC1\n";
  os << "blocks=" << c.blocks << "\n";
  os << "dim=" << c.dim << "\n";
  os << "heads=" << c.heads << "\n";
  os << "img=" << c.img << "\n";
  os << "kind=stage1\n";
  os << "patch=" << c.patch << "\n";
  os << "\n";
  detail_ckpt::write_params(os, models.primary.store, "primary.");
  detail_ckpt::write_params(os, models.nc.store, "nc.");
  os << "END\n";
  if (!os) throw std::runtime_error("short write on checkpoint: " + path);
}

inline Stage1Models load_stage1_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
  auto config = detail_ckpt::read_header(is, path);
  if (detail_ckpt::get(config, "kind", path) != "stage1")
    throw std::runtime_error("checkpoint " + path + ": not a stage1 checkpoint");
  BinaryClassifierConfig cfg;
  cfg.blocks = std::stoi(detail_ckpt::get(config, "blocks", path));
  cfg.dim = std::stoi(detail_ckpt::get(config, "dim", path));
  cfg.heads = std::stoi(detail_ckpt::get(config, "heads", path));
  cfg.img = std::stoi(detail_ckpt::get(config, "img", path));
  cfg.patch = std::stoi(detail_ckpt::get(config, "patch", path));
  Rng rng(0);
  Stage1Models out{BinaryClassifier::create(cfg, rng), BinaryClassifier::create(cfg, rng)};
  // both stores share the stream; primary entries precede nc entries
  std::string line;
  std::size_t filled_primary = 0, filled_nc = 0;
  while (std::getline(is, line)) {
    if (line == "END") {
      if (filled_primary != out.primary.store.params.size() ||
          filled_nc != out.nc.store.params.size())
        throw std::runtime_error("checkpoint " + path + ": incomplete stage1 parameters");
      return out;
    }
    std::istringstream ls(line);
    std::string name;
    int rows = 0, cols = 0;
    if (!(ls >> name >> rows >> cols))
      throw std::runtime_error("checkpoint " + path + ": malformed entry line '" + line + "'");
    ParamStore* ps = nullptr;
    std::string local;
    if (name.rfind("primary.", 0) == 0) {
      ps = &out.primary.store;
      local = name.substr(8);
      ++filled_primary;
    } else if (name.rfind("nc.", 0) == 0) {
      ps = &out.nc.store;
      local = name.substr(3);
      ++filled_nc;
    } else {
      throw std::runtime_error("checkpoint " + path + ": unexpected entry '" + name + "'");
    }
    auto it = ps->params.find(local);
    if (it == ps->params.end())
      throw std::runtime_error("checkpoint " + path + ": unknown parameter '" + name + "'");
    Tensor& t = it->second;
    if (t.rows() != rows || t.cols() != cols)
      throw std::runtime_error("checkpoint " + path + ": parameter '" + name + "' has shape [" +
                               std::to_string(rows) + "x" + std::to_string(cols) +
                               "], expected " + t.shape_str());
    std::vector<float> buf(t.size());
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (is.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
      throw std::runtime_error("checkpoint " + path + ": truncated payload for '" + name + "'");
    for (std::size_t i = 0; i < buf.size(); ++i) t.data()[i] = static_cast<double>(buf[i]);
  }
  throw std::runtime_error("checkpoint " + path + ": missing END marker");
}

}  // namespace agpis
