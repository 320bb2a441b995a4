#include "patchwork/serialize.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <vector>

namespace patchwork {

namespace {

using nlohmann::json;

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

json kernel_to_json(const KernelSpec& spec) {
  return json{{"family", spec.family == KernelFamily::SquaredExponential ? "se" : "exp"},
              {"tau", spec.tau},
              {"rho", spec.rho},
              {"noise_var", spec.noise_var}};
}

KernelSpec kernel_from_json(const json& j) {
  KernelSpec spec;
  const std::string family = j.at("family").get<std::string>();
  if (family == "se") {
    spec.family = KernelFamily::SquaredExponential;
  } else if (family == "exp") {
    spec.family = KernelFamily::Exponential;
  } else {
    throw_error(ErrorKind::Input, "kernel json: unknown family '" + family + "'");
  }
  spec.tau = j.at("tau").get<double>();
  spec.rho = j.at("rho").get<double>();
  spec.noise_var = j.at("noise_var").get<double>();
  spec.validate();
  return spec;
}

json hyperparams_to_json(const HyperParams& params) {
  json list = json::array();
  for (const auto& s : params.specs()) list.push_back(kernel_to_json(s));
  return list;
}

HyperParams hyperparams_from_json(const json& j) {
  std::vector<KernelSpec> specs;
  for (const auto& item : j) specs.push_back(kernel_from_json(item));
  return HyperParams(std::move(specs));
}

json tree_to_json(const SpatialTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes()) {
    json jn;
    jn["level"] = n.level;
    jn["box_lo"] = to_std(n.box_lo);
    jn["box_hi"] = to_std(n.box_hi);
    if (n.is_leaf()) {
      jn["region_id"] = n.region_id;
      jn["members"] = n.members;
    } else {
      jn["left"] = n.left;
      jn["right"] = n.right;
      jn["direction"] = to_std(n.direction);
      jn["threshold"] = n.threshold;
    }
    nodes.push_back(std::move(jn));
  }
  return json{{"dim", tree.dim()},
              {"leaf_count", tree.leaf_count()},
              {"depth", tree.depth()},
              {"nodes", std::move(nodes)}};
}

// Serialization pokes the private state of SpatialTree and PatchworkModel.
struct ModelSerializer {
  static SpatialTree tree_from(const json& j) {
    SpatialTree tree;
    tree.dim_ = j.at("dim").get<int>();
    tree.leaf_count_ = j.at("leaf_count").get<int>();
    tree.depth_ = j.at("depth").get<int>();
    tree.leaf_of_region_.assign(static_cast<std::size_t>(tree.leaf_count_), -1);
    const auto& nodes = j.at("nodes");
    tree.nodes_.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& jn = nodes[i];
      TreeNode& n = tree.nodes_[i];
      n.level = jn.at("level").get<int>();
      n.box_lo = vector_from_json(jn.at("box_lo"));
      n.box_hi = vector_from_json(jn.at("box_hi"));
      if (jn.contains("region_id")) {
        n.region_id = jn.at("region_id").get<int>();
        n.members = jn.at("members").get<std::vector<int>>();
        if (n.region_id < 0 || n.region_id >= tree.leaf_count_) {
          throw_error(ErrorKind::Io, "model bundle: leaf region id out of range");
        }
        tree.leaf_of_region_[static_cast<std::size_t>(n.region_id)] = static_cast<int>(i);
      } else {
        n.left = jn.at("left").get<int>();
        n.right = jn.at("right").get<int>();
        n.direction = vector_from_json(jn.at("direction"));
        n.threshold = jn.at("threshold").get<double>();
      }
    }
    for (int leaf : tree.leaf_of_region_) {
      if (leaf < 0) throw_error(ErrorKind::Io, "model bundle: missing leaf for a region");
    }
    return tree;
  }

  static void save(const PatchworkModel& model, const std::string& path);
  static PatchworkModel load(const std::string& path);
};

SpatialTree tree_from_json(const json& j) { return ModelSerializer::tree_from(j); }

json simspec_to_json(const SimSpec& spec) {
  return json{{"n", spec.n},
              {"dim", spec.dim},
              {"kernel", kernel_to_json(spec.kernel)},
              {"box_lo", to_std(spec.box_lo)},
              {"box_hi", to_std(spec.box_hi)},
              {"seed", spec.seed}};
}

SimSpec simspec_from_json(const json& j) {
  SimSpec spec;
  spec.n = j.at("n").get<std::int64_t>();
  spec.dim = j.at("dim").get<int>();
  spec.kernel = kernel_from_json(j.at("kernel"));
  spec.box_lo = vector_from_json(j.at("box_lo"));
  spec.box_hi = vector_from_json(j.at("box_hi"));
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.validate();
  return spec;
}

json model_info_json(const PatchworkModel& model) {
  json info;
  info["dim"] = model.dim();
  info["train_size"] = model.train_size();
  info["regions"] = model.region_count();
  info["requested_regions"] = model.requested_regions();
  info["pseudo_per_boundary"] = model.pseudo_per_boundary();
  info["pseudo_total"] = model.pseudo_count();
  info["boundary_pairs"] = model.boundaries().entry_count();
  info["seed"] = model.seed();
  info["mean_offset"] = model.mean_offset();
  info["kernels"] = hyperparams_to_json(model.params());
  info["timings"] = json{{"partition_seconds", model.timings().partition_seconds},
                         {"assembly_seconds", model.timings().assembly_seconds},
                         {"factorization_seconds", model.timings().factorization_seconds},
                         {"total_seconds", model.timings().total_seconds}};
  if (!model.optimizer_trace().empty()) {
    json trace = json::array();
    for (const auto& row : model.optimizer_trace()) {
      trace.push_back(json{{"evaluation", row.evaluation},
                           {"log_tau", row.log_tau},
                           {"log_rho", row.log_rho},
                           {"log_noise", row.log_noise},
                           {"value", row.value}});
    }
    info["optimizer_trace"] = std::move(trace);
  }
  return info;
}

namespace {

constexpr char kMagic[8] = {'P', 'K', 'M', 'D', 'L', '0', '0', '1'};

bool is_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char byte = 0;
  std::memcpy(&byte, &probe, 1);
  return byte == 1;
}

// Collects named float64 tensors and lays them out after the JSON header.
class TensorDirectory {
 public:
  void add(const std::string& name, const Eigen::MatrixXd& m) {
    json entry{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", count_}};
    directory_.push_back(std::move(entry));
    tensors_.push_back(m);
    count_ += static_cast<std::int64_t>(m.size());
  }
  void add(const std::string& name, const Eigen::VectorXd& v) {
    add(name, Eigen::MatrixXd(v));
  }

  const json& directory() const { return directory_; }

  void write_payload(std::ostream& os) const {
    for (const auto& m : tensors_) {
      os.write(reinterpret_cast<const char*>(m.data()),
               static_cast<std::streamsize>(sizeof(double)) * m.size());
    }
  }

 private:
  json directory_ = json::array();
  std::vector<Eigen::MatrixXd> tensors_;
  std::int64_t count_ = 0;
};

class TensorReader {
 public:
  TensorReader(const json& directory, std::vector<double> payload)
      : payload_(std::move(payload)) {
    for (const auto& entry : directory) {
      Shape s;
      s.rows = entry.at("rows").get<Eigen::Index>();
      s.cols = entry.at("cols").get<Eigen::Index>();
      s.offset = entry.at("offset").get<std::int64_t>();
      shapes_[entry.at("name").get<std::string>()] = s;
    }
  }

  Eigen::MatrixXd matrix(const std::string& name) const {
    const auto it = shapes_.find(name);
    if (it == shapes_.end()) {
      throw_error(ErrorKind::Io, "model bundle: missing tensor '" + name + "'");
    }
    const Shape& s = it->second;
    if (s.offset < 0 ||
        s.offset + s.rows * s.cols > static_cast<std::int64_t>(payload_.size())) {
      throw_error(ErrorKind::Io, "model bundle: tensor '" + name + "' is out of bounds");
    }
    return Eigen::Map<const Eigen::MatrixXd>(payload_.data() + s.offset, s.rows, s.cols);
  }

  Eigen::VectorXd vector(const std::string& name) const {
    const Eigen::MatrixXd m = matrix(name);
    if (m.cols() > 1) throw_error(ErrorKind::Io, "model bundle: '" + name + "' is not a vector");
    return m.col(0);
  }

 private:
  struct Shape {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::int64_t offset = 0;
  };
  std::map<std::string, Shape> shapes_;
  std::vector<double> payload_;
};

}  // namespace

void ModelSerializer::save(const PatchworkModel& model, const std::string& path) {
  if (!is_little_endian()) {
    throw_error(ErrorKind::Io, "model bundle: only little-endian hosts are supported");
  }
  json header;
  header["format"] = "patchwork-model";
  header["version"] = 1;
  header["dim"] = model.dim();
  header["train_size"] = model.train_size_;
  header["requested_regions"] = model.requested_k_;
  header["pseudo_per_boundary"] = model.requested_b_;
  header["seed"] = model.seed_;
  header["mean_offset"] = model.mean_offset_;
  header["delta_jitter"] = model.delta_jitter_;
  // wall-clock timings stay out of the bundle so refits with one seed
  // write byte-identical files
  header["kernels"] = hyperparams_to_json(model.params_);
  header["tree"] = tree_to_json(model.tree_);

  json boundary = json::array();
  TensorDirectory tensors;
  for (int e = 0; e < model.boundaries_.entry_count(); ++e) {
    const BoundaryEntry& entry = model.boundaries_.entry(e);
    boundary.push_back(json{{"k", entry.k}, {"l", entry.l}, {"node_id", entry.node_id}});
    tensors.add("boundary_points_" + std::to_string(e), entry.points);
  }
  header["boundary"] = std::move(boundary);

  for (const auto& reg : model.regions_) {
    const std::string tag = std::to_string(reg.region_id);
    tensors.add("region_inputs_" + tag, reg.inputs);
    tensors.add("region_targets_" + tag, reg.targets);
  }
  json region_rows = json::array();
  for (const auto& reg : model.regions_) region_rows.push_back(reg.rows);
  header["region_rows"] = std::move(region_rows);

  // factor matrices
  const FactoredAugmented& factors = model.factors_;
  for (int k = 0; k < factors.data_chol().block_count(); ++k) {
    tensors.add("data_factor_" + std::to_string(k), factors.data_chol().factor(k));
  }
  json cross_meta = json::array();
  for (std::size_t i = 0; i < factors.cross().size(); ++i) {
    const CrossBlock& blk = factors.cross()[i];
    cross_meta.push_back(json{{"region", blk.region}, {"entry", blk.entry}});
    tensors.add("cross_" + std::to_string(i), blk.values);
    tensors.add("whitened_" + std::to_string(i), factors.whitened()[i].values);
  }
  header["cross_blocks"] = std::move(cross_meta);

  const auto perm_tensor = [](const Permutation& p) {
    Eigen::VectorXd v(p.size());
    for (int i = 0; i < p.size(); ++i) v[i] = static_cast<double>(p.forward[static_cast<std::size_t>(i)]);
    return v;
  };
  tensors.add("boundary_factor_band", factors.boundary_chol().band_store());
  tensors.add("boundary_factor_perm", perm_tensor(factors.boundary_chol().permutation()));
  tensors.add("schur_factor_band", factors.schur_chol().band_store());
  tensors.add("schur_factor_perm", perm_tensor(factors.schur_chol().permutation()));

  Eigen::MatrixXd schur_triplets(factors.schur().nnz(), 3);
  for (int i = 0; i < factors.schur().nnz(); ++i) {
    const auto& entry = factors.schur().entries()[static_cast<std::size_t>(i)];
    schur_triplets(i, 0) = entry.row;
    schur_triplets(i, 1) = entry.col;
    schur_triplets(i, 2) = entry.value;
  }
  tensors.add("schur_triplets", schur_triplets);

  tensors.add("weighted_targets", model.weighted_targets_);
  tensors.add("boundary_weights", model.boundary_weights_);
  header["tensors"] = json::array();  // placeholder, replaced below

  std::string body;
  {
    header["tensors"] = tensors.directory();
    body = header.dump();
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw_error(ErrorKind::Io, "model bundle: cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  const std::uint64_t json_len = body.size();
  os.write(reinterpret_cast<const char*>(&json_len), sizeof(json_len));
  os.write(body.data(), static_cast<std::streamsize>(body.size()));
  tensors.write_payload(os);
  if (!os) throw_error(ErrorKind::Io, "model bundle: write to '" + path + "' failed");
}

PatchworkModel ModelSerializer::load(const std::string& path) {
  if (!is_little_endian()) {
    throw_error(ErrorKind::Io, "model bundle: only little-endian hosts are supported");
  }
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_error(ErrorKind::Io, "model bundle: cannot open '" + path + "'");

  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw_error(ErrorKind::Io, "model bundle: '" + path + "' carries the wrong signature");
  }
  std::uint64_t json_len = 0;
  is.read(reinterpret_cast<char*>(&json_len), sizeof(json_len));
  if (!is) throw_error(ErrorKind::Io, "model bundle: truncated header");
  std::string body(json_len, '\0');
  is.read(body.data(), static_cast<std::streamsize>(json_len));
  if (!is) throw_error(ErrorKind::Io, "model bundle: truncated JSON header");

  json header;
  try {
    header = json::parse(body);
  } catch (const json::exception& e) {
    throw_error(ErrorKind::Io, std::string("model bundle: bad JSON header: ") + e.what());
  }

  std::vector<double> payload;
  {
    std::vector<char> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (raw.size() % sizeof(double) != 0) {
      throw_error(ErrorKind::Io, "model bundle: payload is not a float64 array");
    }
    payload.resize(raw.size() / sizeof(double));
    std::memcpy(payload.data(), raw.data(), raw.size());
  }

  try {
    TensorReader tensors(header.at("tensors"), std::move(payload));

    PatchworkModel model;
    model.tree_ = tree_from(header.at("tree"));
    model.params_ = hyperparams_from_json(header.at("kernels"));
    model.mean_offset_ = header.at("mean_offset").get<double>();
    model.delta_jitter_ = header.at("delta_jitter").get<double>();
    model.train_size_ = header.at("train_size").get<std::int64_t>();
    model.requested_k_ = header.at("requested_regions").get<int>();
    model.requested_b_ = header.at("pseudo_per_boundary").get<int>();
    model.seed_ = header.at("seed").get<std::uint64_t>();

    std::vector<BoundaryEntry> entries;
    const auto& jb = header.at("boundary");
    for (std::size_t e = 0; e < jb.size(); ++e) {
      BoundaryEntry entry;
      entry.k = jb[e].at("k").get<int>();
      entry.l = jb[e].at("l").get<int>();
      entry.node_id = jb[e].at("node_id").get<int>();
      entry.points = tensors.matrix("boundary_points_" + std::to_string(e));
      entries.push_back(std::move(entry));
    }
    model.boundaries_ = BoundarySet(std::move(entries));

    const auto& rows_json = header.at("region_rows");
    model.regions_.resize(static_cast<std::size_t>(model.tree_.leaf_count()));
    for (int k = 0; k < model.tree_.leaf_count(); ++k) {
      RegionData& reg = model.regions_[static_cast<std::size_t>(k)];
      const std::string tag = std::to_string(k);
      reg.region_id = k;
      reg.kernel = model.params_.for_region(k);
      reg.inputs = tensors.matrix("region_inputs_" + tag);
      reg.targets = tensors.vector("region_targets_" + tag);
      reg.rows = rows_json.at(static_cast<std::size_t>(k)).get<std::vector<int>>();
      if (static_cast<Eigen::Index>(reg.rows.size()) != reg.inputs.rows()) {
        throw_error(ErrorKind::Io, "model bundle: region rows disagree with inputs");
      }
    }

    FactoredAugmentedParts parts;
    parts.delta_dim = model.boundaries_.total_points();
    for (const auto& reg : model.regions_) {
      parts.data_dim += static_cast<int>(reg.inputs.rows());
    }
    parts.entry_offsets.resize(static_cast<std::size_t>(model.boundaries_.entry_count()));
    for (int e = 0; e < model.boundaries_.entry_count(); ++e) {
      parts.entry_offsets[static_cast<std::size_t>(e)] = model.boundaries_.offset(e);
    }
    {
      std::vector<Eigen::MatrixXd> lowers;
      for (int k = 0; k < model.tree_.leaf_count(); ++k) {
        lowers.push_back(tensors.matrix("data_factor_" + std::to_string(k)));
      }
      parts.data_chol = BlockDiagCholesky::from_factors(std::move(lowers));
    }
    const auto& cross_meta = header.at("cross_blocks");
    for (std::size_t i = 0; i < cross_meta.size(); ++i) {
      CrossBlock blk;
      blk.region = cross_meta[i].at("region").get<int>();
      blk.entry = cross_meta[i].at("entry").get<int>();
      blk.values = tensors.matrix("cross_" + std::to_string(i));
      CrossBlock wht = blk;
      wht.values = tensors.matrix("whitened_" + std::to_string(i));
      parts.cross.push_back(std::move(blk));
      parts.whitened.push_back(std::move(wht));
    }
    const auto perm_from = [&tensors](const std::string& name) {
      const Eigen::VectorXd v = tensors.vector(name);
      Permutation p;
      p.forward.resize(static_cast<std::size_t>(v.size()));
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        p.forward[static_cast<std::size_t>(i)] = static_cast<int>(v[i]);
      }
      return p;
    };
    parts.boundary_chol = SparseCholesky::from_parts(perm_from("boundary_factor_perm"),
                                                     tensors.matrix("boundary_factor_band"));
    parts.schur_chol = SparseCholesky::from_parts(perm_from("schur_factor_perm"),
                                                  tensors.matrix("schur_factor_band"));
    {
      const Eigen::MatrixXd trips = tensors.matrix("schur_triplets");
      std::vector<SymSparse::Entry> entries;
      entries.reserve(static_cast<std::size_t>(trips.rows()));
      for (Eigen::Index i = 0; i < trips.rows(); ++i) {
        entries.push_back({static_cast<int>(trips(i, 0)), static_cast<int>(trips(i, 1)),
                           trips(i, 2)});
      }
      parts.schur = SymSparse::from_triplets(parts.delta_dim, std::move(entries));
    }
    model.factors_ = FactoredAugmented::from_parts(std::move(parts));
    model.weighted_targets_ = tensors.vector("weighted_targets");
    model.boundary_weights_ = tensors.vector("boundary_weights");
    if (model.weighted_targets_.size() != model.factors_.data_dim() ||
        model.boundary_weights_.size() != model.factors_.delta_dim()) {
      throw_error(ErrorKind::Io, "model bundle: precomputed vectors have the wrong size");
    }
    model.fitted_ = true;
    return model;
  } catch (const json::exception& e) {
    throw_error(ErrorKind::Io, std::string("model bundle: malformed header: ") + e.what());
  }
}

void PatchworkModel::save(const std::string& path) const {
  if (!fitted_) throw_error(ErrorKind::State, "save: model is not fitted");
  ModelSerializer::save(*this, path);
}

PatchworkModel PatchworkModel::load(const std::string& path) {
  return ModelSerializer::load(path);
}

}  // namespace patchwork
