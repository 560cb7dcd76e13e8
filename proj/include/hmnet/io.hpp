#pragma once

// On-disk formats: the binary dataset file, binary checkpoints, Wavefront OBJ
// and CSV helpers. All binary fields are little-endian regardless of host.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "mesh_core.hpp"
#include "net.hpp"
#include "synth_gen.hpp"
#include "train.hpp"

namespace hmnet::io {

namespace fs = std::filesystem;

inline constexpr char kDatasetMagic[5] = {'H', 'M', 'N', 'K', '1'};
inline constexpr char kCheckpointMagic[5] = {'H', 'M', 'C', 'K', '1'};
inline constexpr std::uint8_t kLittleEndianTag = 1;
inline constexpr std::size_t kDatasetHeaderSize = 64;

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::size_t size() const { return buf_.size(); }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : buf_(std::move(data)) {}

  void raw(void* out, std::size_t n) {
    need(n);
    std::copy_n(buf_.data() + pos_, n, static_cast<char*>(out));
    pos_ += n;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw DataError("unexpected end of file");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Write to a sibling temp file, then rename over the target.
inline void write_file_atomic(const fs::path& path, std::string_view data) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline void write_file_atomic(const fs::path& path, const std::vector<char>& data) {
  write_file_atomic(path, std::string_view(data.data(), data.size()));
}

// ---------------------------------------------------------------------------
// Dataset file
//
//  offset  size  field
//   0      5     magic "HMNK1"
//   5      1     endianness tag (1 = little)
//   6      1     template kind (0 body, 1 hand)
//   7      1     split (0 train, 1 test)
//   8      1     noise mode (0 clean, 1 noisy_raster)
//   9      3     zero
//  12      4     template resolution
//  16      8     template hash
//  24      8     generator seed
//  32      8     sample count
//  40      4     raster height
//  44      4     raster width
//  48      4     vertex count
//  52      4     joint count
//  56      4     segment count
//  60      4     record stride in bytes
//
// Each record: joint rotations (3J f64), shape scales (S f64), global rotation
// (3 f64), global translation (3 f64), gt vertices (3V f64), gt joints (3J f64),
// part raster (H*W u8), density raster (H*W f64). Points are stored x, y, z.

struct DatasetLayout {
  std::uint32_t n_vertices = 0;
  std::uint32_t n_joints = 0;
  std::uint32_t n_segments = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;

  std::size_t record_stride() const {
    const std::size_t doubles = 3u * n_joints + n_segments + 6u + 3u * n_vertices + 3u * n_joints;
    const std::size_t cells = static_cast<std::size_t>(height) * width;
    return 8 * doubles + cells + 8 * cells;
  }
};

inline DatasetLayout layout_of(const ArticulatedTemplate& tpl, int height, int width) {
  return {static_cast<std::uint32_t>(tpl.mesh.vertex_count()), static_cast<std::uint32_t>(tpl.joint_count()),
          static_cast<std::uint32_t>(tpl.segment_count()), static_cast<std::uint32_t>(height),
          static_cast<std::uint32_t>(width)};
}

inline std::vector<char> encode_dataset(const Dataset& ds, const DatasetLayout& lay) {
  ByteWriter w;
  w.raw(kDatasetMagic, 5);
  w.u8(kLittleEndianTag);
  w.u8(static_cast<std::uint8_t>(ds.kind));
  w.u8(static_cast<std::uint8_t>(ds.split));
  w.u8(static_cast<std::uint8_t>(ds.noise));
  w.u8(0);
  w.u8(0);
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(ds.resolution));
  w.u64(ds.template_hash);
  w.u64(ds.seed);
  w.u64(ds.size());
  w.u32(lay.height);
  w.u32(lay.width);
  w.u32(lay.n_vertices);
  w.u32(lay.n_joints);
  w.u32(lay.n_segments);
  w.u32(static_cast<std::uint32_t>(lay.record_stride()));
  auto put = [&](const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
  };
  for (const PoseSample& s : ds.samples) {
    const std::size_t start = w.size();
    if (s.params.joint_rotations.cols() != lay.n_joints || s.params.shape_scales.size() != lay.n_segments ||
        s.gt_vertices.cols() != lay.n_vertices || s.gt_joints.cols() != lay.n_joints ||
        s.rasters.part.size() != static_cast<std::size_t>(lay.height) * lay.width) {
      throw ShapeError("sample does not match the dataset layout");
    }
    put(s.params.joint_rotations);
    put(s.params.shape_scales);
    put(s.params.global_rotation);
    put(s.params.global_translation);
    put(s.gt_vertices);
    put(s.gt_joints);
    w.raw(s.rasters.part.data(), s.rasters.part.size());
    for (double d : s.rasters.density) w.f64(d);
    if (w.size() - start != lay.record_stride()) throw ShapeError("record stride mismatch");
  }
  return w.bytes();
}

inline void save_dataset(const fs::path& path, const Dataset& ds, const ArticulatedTemplate& tpl) {
  write_file_atomic(path, encode_dataset(ds, layout_of(tpl, ds.raster_height, ds.raster_width)));
}

struct DatasetHeader {
  TemplateKind kind = TemplateKind::body;
  Split split = Split::train;
  NoiseMode noise = NoiseMode::clean;
  int resolution = 0;
  std::uint64_t template_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t count = 0;
  DatasetLayout layout;
  std::uint32_t stride = 0;
};

inline DatasetHeader read_dataset_header(ByteReader& r) {
  char magic[5];
  r.raw(magic, 5);
  if (!std::equal(magic, magic + 5, kDatasetMagic)) throw DataError("not a dataset file (bad magic)");
  if (r.u8() != kLittleEndianTag) throw DataError("unsupported endianness tag");
  DatasetHeader h;
  const std::uint8_t kind = r.u8(), split = r.u8(), noise = r.u8();
  if (kind > 1 || split > 1 || noise > 1) throw DataError("corrupt dataset header");
  h.kind = static_cast<TemplateKind>(kind);
  h.split = static_cast<Split>(split);
  h.noise = static_cast<NoiseMode>(noise);
  r.u8();
  r.u8();
  r.u8();
  h.resolution = static_cast<int>(r.u32());
  h.template_hash = r.u64();
  h.seed = r.u64();
  h.count = r.u64();
  h.layout.height = r.u32();
  h.layout.width = r.u32();
  h.layout.n_vertices = r.u32();
  h.layout.n_joints = r.u32();
  h.layout.n_segments = r.u32();
  h.stride = r.u32();
  if (h.stride != h.layout.record_stride()) throw DataError("record stride does not match declared layout");
  return h;
}

// When `tpl` is given, the header hash must match it and every record's joints
// must equal the regressor applied to its vertices.
inline Dataset load_dataset(const fs::path& path, const ArticulatedTemplate* tpl = nullptr) {
  ByteReader r(read_file(path));
  const DatasetHeader h = read_dataset_header(r);
  if (r.remaining() != h.count * h.stride) {
    throw DataError("dataset size does not match its header (" + std::to_string(h.count) + " records)");
  }
  if (tpl && h.template_hash != tpl->hash()) {
    throw DataError("template hash mismatch: dataset was generated for a different template");
  }
  Dataset ds;
  ds.kind = h.kind;
  ds.resolution = h.resolution;
  ds.template_hash = h.template_hash;
  ds.seed = h.seed;
  ds.split = h.split;
  ds.noise = h.noise;
  ds.raster_height = static_cast<int>(h.layout.height);
  ds.raster_width = static_cast<int>(h.layout.width);
  const auto nj = static_cast<Eigen::Index>(h.layout.n_joints);
  const auto nv = static_cast<Eigen::Index>(h.layout.n_vertices);
  const std::size_t cells = static_cast<std::size_t>(h.layout.height) * h.layout.width;
  auto get = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
  };
  ds.samples.resize(h.count);
  for (PoseSample& s : ds.samples) {
    s.params.joint_rotations.resize(3, nj);
    s.params.shape_scales.resize(h.layout.n_segments);
    s.gt_vertices.resize(3, nv);
    s.gt_joints.resize(3, nj);
    get(s.params.joint_rotations);
    get(s.params.shape_scales);
    get(s.params.global_rotation);
    get(s.params.global_translation);
    get(s.gt_vertices);
    get(s.gt_joints);
    s.rasters.height = ds.raster_height;
    s.rasters.width = ds.raster_width;
    s.rasters.part.resize(cells);
    r.raw(s.rasters.part.data(), cells);
    s.rasters.density.resize(cells);
    for (double& d : s.rasters.density) d = r.f64();
    if (tpl && regress_joints(s.gt_vertices, tpl->mesh.joint_regressor) != s.gt_joints) {
      throw DataError("stored joints disagree with the template regressor");
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Checkpoint file
//
//   magic "HMCK1" (5), endianness tag (1), zero (2), config hash (u64),
//   epoch (u64), step (u64), blob count (u32), zero (u32), then blobs:
//   tag length (u16), tag bytes, rows (u32), cols (u32), rows*cols f64
//   column-major.

struct Blob {
  std::string tag;
  Eigen::MatrixXd data;
};

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::vector<Blob> blobs;

  const Blob* find(std::string_view tag) const {
    for (const Blob& b : blobs)
      if (b.tag == tag) return &b;
    return nullptr;
  }
  const Eigen::MatrixXd& at(std::string_view tag) const {
    const Blob* b = find(tag);
    if (!b) throw DataError("checkpoint is missing blob '" + std::string(tag) + "'");
    return b->data;
  }
};

inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
  ByteWriter w;
  w.raw(kCheckpointMagic, 5);
  w.u8(kLittleEndianTag);
  w.u16(0);
  w.u64(ck.config_hash);
  w.u64(ck.epoch);
  w.u64(ck.step);
  w.u32(static_cast<std::uint32_t>(ck.blobs.size()));
  w.u32(0);
  for (const Blob& b : ck.blobs) {
    w.u16(static_cast<std::uint16_t>(b.tag.size()));
    w.raw(b.tag.data(), b.tag.size());
    w.u32(static_cast<std::uint32_t>(b.data.rows()));
    w.u32(static_cast<std::uint32_t>(b.data.cols()));
    for (Eigen::Index i = 0; i < b.data.size(); ++i) w.f64(b.data.data()[i]);
  }
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::vector<char> bytes) {
  ByteReader r(std::move(bytes));
  char magic[5];
  r.raw(magic, 5);
  if (!std::equal(magic, magic + 5, kCheckpointMagic)) throw DataError("not a checkpoint file (bad magic)");
  if (r.u8() != kLittleEndianTag) throw DataError("unsupported endianness tag");
  r.u16();
  Checkpoint ck;
  ck.config_hash = r.u64();
  ck.epoch = r.u64();
  ck.step = r.u64();
  const std::uint32_t n = r.u32();
  r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Blob b;
    b.tag.resize(r.u16());
    r.raw(b.tag.data(), b.tag.size());
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols * 8 > r.remaining()) throw DataError("truncated checkpoint blob");
    b.data.resize(rows, cols);
    for (Eigen::Index k = 0; k < b.data.size(); ++k) b.data.data()[k] = r.f64();
    ck.blobs.push_back(std::move(b));
  }
  if (r.remaining() != 0) throw DataError("trailing bytes after checkpoint blobs");
  return ck;
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& ck) { write_file_atomic(path, encode_checkpoint(ck)); }
inline Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

inline Eigen::MatrixXd arch_blob(const ArchConfig& a) {
  Eigen::MatrixXd m(1, 10);
  m << a.raster_cells, a.part_channels, a.encoder_hidden, a.embed_width, a.trunk_width, a.branch_hidden,
      a.n_vertices, a.n_joints, a.part_encoder ? 1 : 0, a.joint_branch ? 1 : 0;
  return m;
}

inline ArchConfig arch_from_blob(const Eigen::MatrixXd& m) {
  if (m.size() != 10) throw DataError("malformed architecture blob");
  ArchConfig a;
  a.raster_cells = static_cast<int>(m(0));
  a.part_channels = static_cast<int>(m(1));
  a.encoder_hidden = static_cast<int>(m(2));
  a.embed_width = static_cast<int>(m(3));
  a.trunk_width = static_cast<int>(m(4));
  a.branch_hidden = static_cast<int>(m(5));
  a.n_vertices = static_cast<int>(m(6));
  a.n_joints = static_cast<int>(m(7));
  a.part_encoder = m(8) != 0.0;
  a.joint_branch = m(9) != 0.0;
  return a;
}

inline Checkpoint make_checkpoint(const TrainState& st, std::uint64_t config_hash) {
  Checkpoint ck;
  ck.config_hash = config_hash;
  ck.epoch = static_cast<std::uint64_t>(st.epochs_done);
  ck.step = st.adam.step;
  ck.blobs.push_back({"meta.arch", arch_blob(st.params.arch)});
  Eigen::MatrixXd lambdas(1, 3);
  lambdas << st.weights.lambda1, st.weights.lambda2, st.weights_fixed ? 1.0 : 0.0;
  ck.blobs.push_back({"meta.loss_weights", lambdas});
  Eigen::MatrixXd best(1, 2);
  best << st.best_metric, st.best_epoch;
  ck.blobs.push_back({"meta.best", best});
  auto stack = [&](const std::string& prefix, const LayerStack& layers) {
    for (const Layer& l : layers) {
      ck.blobs.push_back({prefix + l.name + ".weight", l.weight});
      ck.blobs.push_back({prefix + l.name + ".bias", Eigen::MatrixXd(l.bias)});
    }
  };
  stack("param.", st.params.layers);
  stack("adam.m.", st.adam.m);
  stack("adam.v.", st.adam.v);
  return ck;
}

inline TrainState restore_state(const Checkpoint& ck) {
  TrainState st;
  st.params = init_params(arch_from_blob(ck.at("meta.arch")), 0);
  st.adam = AdamState::zeros_for(st.params);
  auto fill = [&](const std::string& prefix, LayerStack& layers) {
    for (Layer& l : layers) {
      const Eigen::MatrixXd& w = ck.at(prefix + l.name + ".weight");
      const Eigen::MatrixXd& b = ck.at(prefix + l.name + ".bias");
      if (w.rows() != l.weight.rows() || w.cols() != l.weight.cols() || b.size() != l.bias.size()) {
        throw ShapeError("checkpoint blob " + prefix + l.name + " has the wrong shape");
      }
      l.weight = w;
      l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), b.size());
    }
  };
  fill("param.", st.params.layers);
  fill("adam.m.", st.adam.m);
  fill("adam.v.", st.adam.v);
  st.adam.step = ck.step;
  st.epochs_done = static_cast<int>(ck.epoch);
  const Eigen::MatrixXd& lw = ck.at("meta.loss_weights");
  st.weights = {lw(0), lw(1)};
  st.weights_fixed = lw(2) != 0.0;
  const Eigen::MatrixXd& best = ck.at("meta.best");
  st.best_metric = best(0);
  st.best_epoch = static_cast<int>(best(1));
  return st;
}

// ---------------------------------------------------------------------------
// Wavefront OBJ

inline std::string format_obj(const Eigen::Ref<const PointSet>& verts, const std::vector<Face>& faces) {
  std::string out;
  char line[128];
  for (Eigen::Index i = 0; i < verts.cols(); ++i) {
    std::snprintf(line, sizeof line, "v %.6f %.6f %.6f\n", verts(0, i), verts(1, i), verts(2, i));
    out += line;
  }
  for (const Face& f : faces) {
    std::snprintf(line, sizeof line, "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
    out += line;
  }
  return out;
}

inline void write_obj(const fs::path& path, const Eigen::Ref<const PointSet>& verts, const std::vector<Face>& faces) {
  write_file_atomic(path, format_obj(verts, faces));
}

struct ObjMesh {
  PointSet vertices;
  std::vector<Face> faces;
};

// Reads "v" and triangular "f" records; other records are skipped.
inline ObjMesh read_obj(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Point> verts;
  ObjMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "v") {
      Point p;
      if (!(ss >> p.x() >> p.y() >> p.z())) throw DataError("malformed vertex line: " + line);
      verts.push_back(p);
    } else if (kind == "f") {
      Face f;
      for (int& idx : f) {
        std::string tok;
        if (!(ss >> tok)) throw DataError("malformed face line: " + line);
        idx = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.faces.push_back(f);
    }
  }
  mesh.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
  return mesh;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string train_log_header() { return "epoch,step,l_s,l_j,l_js,combined,lr\n"; }

inline std::string train_log_row(const BatchLogRow& r) {
  return std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + fmt_real(r.loss.l_s) + "," +
         fmt_real(r.loss.l_j) + "," + fmt_real(r.loss.l_js) + "," + fmt_real(r.loss.combined) + "," +
         fmt_real(r.lr) + "\n";
}

inline std::string epoch_metrics_header() {
  return "epoch,mean_combined,surface_error,joint_error,pa_surface_error,pa_joint_error\n";
}

inline std::string epoch_metrics_row(const EpochLogRow& r) {
  const SampleMetrics& m = r.held_out;
  return std::to_string(r.epoch) + "," + fmt_real(r.mean_combined) + "," + fmt_real(m.surface_error) + "," +
         fmt_real(m.joint_error) + "," + fmt_real(m.pa_surface_error) + "," + fmt_real(m.pa_joint_error) + "\n";
}

inline std::string metrics_csv(const MetricsReport& rep) {
  std::string out = "sample,surface_error,joint_error,pa_surface_error,pa_joint_error\n";
  auto row = [&](const std::string& label, const SampleMetrics& m) {
    out += label + "," + fmt_real(m.surface_error) + "," + fmt_real(m.joint_error) + "," +
           fmt_real(m.pa_surface_error) + "," + fmt_real(m.pa_joint_error) + "\n";
  };
  for (std::size_t i = 0; i < rep.per_sample.size(); ++i) row(std::to_string(i), rep.per_sample[i]);
  row("mean", rep.mean);
  return out;
}

// Summary block in mm-equivalent units (model units x 1000).
inline std::string metrics_summary(const MetricsReport& rep) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "samples            %zu\n"
                "surface_error      %.3f\n"
                "joint_error        %.3f\n"
                "pa_surface_error   %.3f\n"
                "pa_joint_error     %.3f\n",
                rep.per_sample.size(), 1000.0 * rep.mean.surface_error, 1000.0 * rep.mean.joint_error,
                1000.0 * rep.mean.pa_surface_error, 1000.0 * rep.mean.pa_joint_error);
  return buf;
}

inline std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace hmnet::io
