#include "scenefit/io.hpp"

#include <json.hpp>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

namespace scenefit::io {

using nlohmann::json;

namespace {

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const std::size_t offset = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    throw ParseError("malformed JSON", offset, json_path_at(text, offset));
  }
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ParseError("expected an object", ParseError::kUnknownOffset, path);
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError("missing field", ParseError::kUnknownOffset, join(path, key));
  }
  return *it;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ParseError("unknown field", ParseError::kUnknownOffset, join(path, it.key()));
  }
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError("expected a number", ParseError::kUnknownOffset, path);
  return v.get<double>();
}

int integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ParseError("expected an integer", ParseError::kUnknownOffset, path);
  return v.get<int>();
}

const json& array(const json& v, const std::string& path, std::optional<std::size_t> size = {}) {
  if (!v.is_array()) throw ParseError("expected an array", ParseError::kUnknownOffset, path);
  if (size && v.size() != *size) {
    throw ParseError("expected " + std::to_string(*size) + " elements, found " + std::to_string(v.size()),
                     ParseError::kUnknownOffset, path);
  }
  return v;
}

Vec3 vec3(const json& v, const std::string& path) {
  array(v, path, 3);
  return Vec3(number(v[0], index(path, 0)), number(v[1], index(path, 1)), number(v[2], index(path, 2)));
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename Fn>
auto wrap_validation(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ParseError(std::string(what) + ": " + e.what(), ParseError::kUnknownOffset, "");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string json_path_at(std::string_view text, std::size_t offset) {
  struct Level {
    bool object;
    std::string key;
    bool expecting_key;
    std::size_t index;
  };
  std::vector<Level> stack;
  const std::size_t end = std::min(offset, text.size());
  std::size_t i = 0;
  while (i < end) {
    const char c = text[i];
    if (c == '"') {
      std::size_t j = i + 1;
      std::string content;
      while (j < text.size() && text[j] != '"') {
        if (text[j] == '\\' && j + 1 < text.size()) ++j;
        content.push_back(text[j]);
        ++j;
      }
      if (!stack.empty() && stack.back().object && stack.back().expecting_key) {
        stack.back().key = content;
        stack.back().expecting_key = false;
      }
      i = j + 1;
      continue;
    }
    switch (c) {
      case '{':
        stack.push_back({true, "", true, 0});
        break;
      case '[':
        stack.push_back({false, "", false, 0});
        break;
      case '}':
      case ']':
        if (!stack.empty()) stack.pop_back();
        break;
      case ',':
        if (!stack.empty()) {
          if (stack.back().object) {
            stack.back().expecting_key = true;
          } else {
            ++stack.back().index;
          }
        }
        break;
      default:
        break;
    }
    ++i;
  }
  std::string path;
  for (const Level& level : stack) {
    if (level.object) {
      if (level.expecting_key || level.key.empty()) break;
      path = join(path, level.key);
    } else {
      path = index(path, level.index);
    }
  }
  return path;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

// ---------------------------------------------------------------------------
// Motion

std::string motion_to_json(const MotionSequence& motion) {
  motion.validate();
  json j;
  json t = json::array();
  for (const Vec3& v : motion.translation) t.push_back(to_json(v));
  json theta = json::array();
  for (const Pose& pose : motion.pose) {
    json frame = json::array();
    for (const Vec3& v : pose) frame.push_back(to_json(v));
    theta.push_back(std::move(frame));
  }
  json beta = json::array();
  for (int i = 0; i < kNumBetas; ++i) beta.push_back(motion.beta(i));
  j["T"] = std::move(t);
  j["theta"] = std::move(theta);
  j["beta"] = std::move(beta);
  j["frame_rate"] = motion.frame_rate;
  j["frame"] = std::string(to_string(motion.frame));
  return j.dump(1) + "\n";
}

MotionSequence motion_from_json(std::string_view text) {
  const json j = parse_json(text);
  if (!j.is_object()) throw ParseError("motion must be a JSON object", 0, "");
  reject_unknown(j, {"T", "theta", "beta", "frame_rate", "frame"}, "");
  MotionSequence m;
  const json& t = array(field(j, "T", ""), "T");
  const json& theta = array(field(j, "theta", ""), "theta");
  if (t.size() != theta.size()) {
    throw ParseError("T has " + std::to_string(t.size()) + " frames but theta has " +
                         std::to_string(theta.size()),
                     ParseError::kUnknownOffset, "theta");
  }
  for (std::size_t k = 0; k < t.size(); ++k) m.translation.push_back(vec3(t[k], index("T", k)));
  m.pose.resize(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const std::string path = index("theta", k);
    array(theta[k], path, kNumJoints);
    for (int jt = 0; jt < kNumJoints; ++jt) m.pose[k][jt] = vec3(theta[k][jt], index(path, jt));
  }
  const json& beta = array(field(j, "beta", ""), "beta", kNumBetas);
  for (int i = 0; i < kNumBetas; ++i) m.beta(i) = number(beta[i], index("beta", i));
  m.frame_rate = number(field(j, "frame_rate", ""), "frame_rate");
  const json& frame = field(j, "frame", "");
  if (!frame.is_string()) throw ParseError("expected a string", ParseError::kUnknownOffset, "frame");
  try {
    m.frame = frame_from_string(frame.get<std::string>());
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), ParseError::kUnknownOffset, "frame");
  }
  wrap_validation("invalid motion", [&] {
    m.validate();
    return 0;
  });
  return m;
}

// ---------------------------------------------------------------------------
// LiDAR trajectory

std::string trajectory_to_json(const Points& positions, Frame frame) {
  json p = json::array();
  for (const Vec3& v : positions) {
    if (!v.allFinite()) throw ValidationError("trajectory positions must be finite");
    p.push_back(to_json(v));
  }
  json j;
  j["positions"] = std::move(p);
  j["frame"] = std::string(to_string(frame));
  return j.dump(1) + "\n";
}

Points trajectory_from_json(std::string_view text, Frame expected) {
  const json j = parse_json(text);
  if (!j.is_object()) throw ParseError("trajectory must be a JSON object", 0, "");
  reject_unknown(j, {"positions", "frame"}, "");
  const json& frame = field(j, "frame", "");
  if (!frame.is_string()) throw ParseError("expected a string", ParseError::kUnknownOffset, "frame");
  Frame f;
  try {
    f = frame_from_string(frame.get<std::string>());
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), ParseError::kUnknownOffset, "frame");
  }
  if (f != expected) {
    throw FrameMismatch("trajectory is in " + std::string(to_string(f)) + ", expected " +
                        std::string(to_string(expected)));
  }
  const json& p = array(field(j, "positions", ""), "positions");
  Points out;
  for (std::size_t k = 0; k < p.size(); ++k) out.push_back(vec3(p[k], index("positions", k)));
  return out;
}

// ---------------------------------------------------------------------------
// Transform

std::string transform_to_json(const RigidTransform& transform) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    rows.push_back(json::array({transform.matrix()(r, 0), transform.matrix()(r, 1),
                                transform.matrix()(r, 2), transform.matrix()(r, 3)}));
  }
  json j;
  j["matrix"] = std::move(rows);
  j["source_frame"] = std::string(to_string(transform.source()));
  j["target_frame"] = std::string(to_string(transform.target()));
  return j.dump(1) + "\n";
}

RigidTransform transform_from_json(std::string_view text) {
  const json j = parse_json(text);
  if (!j.is_object()) throw ParseError("transform must be a JSON object", 0, "");
  reject_unknown(j, {"matrix", "source_frame", "target_frame"}, "");
  const json& rows = array(field(j, "matrix", ""), "matrix", 4);
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    const std::string path = index("matrix", r);
    array(rows[r], path, 4);
    for (int c = 0; c < 4; ++c) m(r, c) = number(rows[r][c], index(path, c));
  }
  auto frame = [&](const char* key) {
    const json& v = field(j, key, "");
    if (!v.is_string()) throw ParseError("expected a string", ParseError::kUnknownOffset, key);
    try {
      return frame_from_string(v.get<std::string>());
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), ParseError::kUnknownOffset, key);
    }
  };
  const Frame source = frame("source_frame");
  const Frame target = frame("target_frame");
  return wrap_validation("invalid transform", [&] { return RigidTransform::from_matrix(m, source, target); });
}

// ---------------------------------------------------------------------------
// Template

std::string template_to_json(const body::BodyTemplate& tmpl) {
  tmpl.validate();
  const std::size_t nv = tmpl.num_vertices();
  json j;
  json rest = json::array();
  for (const Vec3& v : tmpl.rest_vertices) rest.push_back(to_json(v));
  json faces = json::array();
  for (const Face& f : tmpl.faces) faces.push_back(json::array({f[0], f[1], f[2]}));
  json parents = json::array();
  for (int p : tmpl.parents) parents.push_back(p);
  json weights = json::array();
  json basis = json::array();
  for (std::size_t i = 0; i < nv; ++i) {
    json row = json::array();
    for (int jt = 0; jt < kNumJoints; ++jt) row.push_back(tmpl.skin_weights(static_cast<Eigen::Index>(i), jt));
    weights.push_back(std::move(row));
    json comp = json::array();
    for (int a = 0; a < 3; ++a) {
      json coeffs = json::array();
      for (int b = 0; b < kNumBetas; ++b) {
        coeffs.push_back(tmpl.shape_basis(3 * static_cast<Eigen::Index>(i) + a, b));
      }
      comp.push_back(std::move(coeffs));
    }
    basis.push_back(std::move(comp));
  }
  json regressor = json::array();
  for (int jt = 0; jt < kNumJoints; ++jt) {
    json row = json::array();
    for (std::size_t i = 0; i < nv; ++i) row.push_back(tmpl.joint_regressor(jt, static_cast<Eigen::Index>(i)));
    regressor.push_back(std::move(row));
  }
  json groups = json::object();
  for (int g = 0; g < body::kNumGroups; ++g) {
    groups[std::string(body::to_string(static_cast<body::Group>(g)))] = tmpl.groups[g];
  }
  json grids = json::object();
  for (int c = 0; c < 4; ++c) {
    if (tmpl.contact_grids[c]) {
      grids[std::string(body::to_string(static_cast<body::Group>(c)))] =
          json::array({tmpl.contact_grids[c]->cols, tmpl.contact_grids[c]->rows});
    }
  }
  j["rest_vertices"] = std::move(rest);
  j["faces"] = std::move(faces);
  j["parents"] = std::move(parents);
  j["skin_weights"] = std::move(weights);
  j["shape_basis"] = std::move(basis);
  j["joint_regressor"] = std::move(regressor);
  j["groups"] = std::move(groups);
  j["contact_grids"] = std::move(grids);
  return j.dump() + "\n";
}

body::BodyTemplate template_from_json(std::string_view text) {
  const json j = parse_json(text);
  if (!j.is_object()) throw ParseError("template must be a JSON object", 0, "");
  reject_unknown(j,
                 {"rest_vertices", "faces", "parents", "skin_weights", "shape_basis",
                  "joint_regressor", "groups", "contact_grids"},
                 "");
  body::BodyTemplate t;
  const json& rest = array(field(j, "rest_vertices", ""), "rest_vertices");
  for (std::size_t i = 0; i < rest.size(); ++i) t.rest_vertices.push_back(vec3(rest[i], index("rest_vertices", i)));
  const auto nv = static_cast<Eigen::Index>(t.rest_vertices.size());

  const json& faces = array(field(j, "faces", ""), "faces");
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const std::string path = index("faces", f);
    array(faces[f], path, 3);
    t.faces.push_back({integer(faces[f][0], index(path, 0)), integer(faces[f][1], index(path, 1)),
                       integer(faces[f][2], index(path, 2))});
  }
  const json& parents = array(field(j, "parents", ""), "parents", kNumJoints);
  for (int jt = 0; jt < kNumJoints; ++jt) t.parents[jt] = integer(parents[jt], index("parents", jt));

  const json& weights = array(field(j, "skin_weights", ""), "skin_weights", static_cast<std::size_t>(nv));
  t.skin_weights.resize(nv, kNumJoints);
  for (Eigen::Index i = 0; i < nv; ++i) {
    const std::string path = index("skin_weights", static_cast<std::size_t>(i));
    array(weights[i], path, kNumJoints);
    for (int jt = 0; jt < kNumJoints; ++jt) t.skin_weights(i, jt) = number(weights[i][jt], index(path, jt));
  }
  const json& basis = array(field(j, "shape_basis", ""), "shape_basis", static_cast<std::size_t>(nv));
  t.shape_basis.resize(3 * nv, kNumBetas);
  for (Eigen::Index i = 0; i < nv; ++i) {
    const std::string path = index("shape_basis", static_cast<std::size_t>(i));
    array(basis[i], path, 3);
    for (int a = 0; a < 3; ++a) {
      const std::string p2 = index(path, a);
      array(basis[i][a], p2, kNumBetas);
      for (int b = 0; b < kNumBetas; ++b) t.shape_basis(3 * i + a, b) = number(basis[i][a][b], index(p2, b));
    }
  }
  const json& regressor = array(field(j, "joint_regressor", ""), "joint_regressor", kNumJoints);
  t.joint_regressor.resize(kNumJoints, nv);
  for (int jt = 0; jt < kNumJoints; ++jt) {
    const std::string path = index("joint_regressor", jt);
    array(regressor[jt], path, static_cast<std::size_t>(nv));
    for (Eigen::Index i = 0; i < nv; ++i) {
      t.joint_regressor(jt, i) = number(regressor[jt][i], index(path, static_cast<std::size_t>(i)));
    }
  }
  const json& groups = field(j, "groups", "");
  if (!groups.is_object()) throw ParseError("expected an object", ParseError::kUnknownOffset, "groups");
  for (auto it = groups.begin(); it != groups.end(); ++it) {
    const std::string path = join("groups", it.key());
    body::Group g;
    try {
      g = body::group_from_string(it.key());
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), ParseError::kUnknownOffset, path);
    }
    array(*it, path);
    for (std::size_t i = 0; i < it->size(); ++i) {
      t.groups[static_cast<int>(g)].push_back(integer((*it)[i], index(path, i)));
    }
  }
  if (j.contains("contact_grids")) {
    const json& grids = j["contact_grids"];
    if (!grids.is_object()) throw ParseError("expected an object", ParseError::kUnknownOffset, "contact_grids");
    for (auto it = grids.begin(); it != grids.end(); ++it) {
      const std::string path = join("contact_grids", it.key());
      int g = -1;
      try {
        g = static_cast<int>(body::group_from_string(it.key()));
      } catch (const ValidationError& e) {
        throw ParseError(e.what(), ParseError::kUnknownOffset, path);
      }
      if (g > 3) throw ParseError("contact grids exist only for hands and feet", ParseError::kUnknownOffset, path);
      array(*it, path, 2);
      t.contact_grids[g] = body::GridShape{integer((*it)[0], index(path, 0)), integer((*it)[1], index(path, 1))};
    }
  }
  wrap_validation("invalid template", [&] {
    t.validate();
    return 0;
  });
  return t;
}

// ---------------------------------------------------------------------------
// PLY

namespace {

enum class ScalarType { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

std::optional<ScalarType> scalar_type(std::string_view name) {
  static const std::map<std::string, ScalarType, std::less<>> kTypes = {
      {"char", ScalarType::kInt8},     {"int8", ScalarType::kInt8},      {"uchar", ScalarType::kUInt8},
      {"uint8", ScalarType::kUInt8},   {"short", ScalarType::kInt16},    {"int16", ScalarType::kInt16},
      {"ushort", ScalarType::kUInt16}, {"uint16", ScalarType::kUInt16},  {"int", ScalarType::kInt32},
      {"int32", ScalarType::kInt32},   {"uint", ScalarType::kUInt32},    {"uint32", ScalarType::kUInt32},
      {"float", ScalarType::kFloat32}, {"float32", ScalarType::kFloat32}, {"double", ScalarType::kFloat64},
      {"float64", ScalarType::kFloat64}};
  const auto it = kTypes.find(name);
  if (it == kTypes.end()) return std::nullopt;
  return it->second;
}

std::size_t type_size(ScalarType t) {
  switch (t) {
    case ScalarType::kInt8:
    case ScalarType::kUInt8:
      return 1;
    case ScalarType::kInt16:
    case ScalarType::kUInt16:
      return 2;
    case ScalarType::kInt32:
    case ScalarType::kUInt32:
    case ScalarType::kFloat32:
      return 4;
    case ScalarType::kFloat64:
      return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  ScalarType type;
  bool is_list = false;
  ScalarType count_type = ScalarType::kUInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

struct PlyData {
  bool binary = false;
  std::vector<Element> elements;
  std::map<std::string, std::string> comments;
  Points positions;
  Points normals;
  bool has_normals = false;
  std::vector<Face> faces;
};

template <typename T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

class PlyReader {
 public:
  explicit PlyReader(std::string_view bytes) : b_(bytes) {}

  PlyData read() {
    header();
    for (const Element& e : data_.elements) {
      for (std::size_t i = 0; i < e.count; ++i) record(e, i);
    }
    return std::move(data_);
  }

 private:
  [[noreturn]] void fail(const std::string& msg, const std::string& field = "") const {
    throw ParseError("PLY: " + msg, pos_, field);
  }

  std::string_view line() {
    const std::size_t end = b_.find('\n', pos_);
    if (end == std::string_view::npos) fail("unexpected end of header");
    std::string_view l = b_.substr(pos_, end - pos_);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    line_start_ = pos_;
    pos_ = end + 1;
    return l;
  }

  static std::vector<std::string> split(std::string_view l) {
    std::vector<std::string> out;
    std::istringstream is{std::string(l)};
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
  }

  void header() {
    if (line() != "ply") {
      pos_ = 0;
      fail("missing 'ply' magic");
    }
    bool format_seen = false;
    while (true) {
      const std::string_view l = line();
      const auto words = split(l);
      if (words.empty()) continue;
      if (words[0] == "end_header") break;
      if (words[0] == "format") {
        if (words.size() < 2) fail("bad format line", "format");
        if (words[1] == "ascii") {
          data_.binary = false;
        } else if (words[1] == "binary_little_endian") {
          data_.binary = true;
        } else {
          pos_ = line_start_;
          fail("unsupported format '" + words[1] + "'", "format");
        }
        format_seen = true;
      } else if (words[0] == "comment") {
        if (words.size() >= 3) data_.comments[words[1]] = words[2];
      } else if (words[0] == "element") {
        if (words.size() != 3) fail("bad element line", "element");
        Element e;
        e.name = words[1];
        std::size_t count = 0;
        const auto [ptr, ec] = std::from_chars(words[2].data(), words[2].data() + words[2].size(), count);
        if (ec != std::errc() || ptr != words[2].data() + words[2].size()) {
          pos_ = line_start_;
          fail("bad element count", e.name);
        }
        e.count = count;
        data_.elements.push_back(std::move(e));
      } else if (words[0] == "property") {
        if (data_.elements.empty()) fail("property before element");
        Property p;
        if (words.size() == 5 && words[1] == "list") {
          const auto ct = scalar_type(words[2]);
          const auto vt = scalar_type(words[3]);
          if (!ct || !vt) fail("unknown list property type", words[4]);
          p.is_list = true;
          p.count_type = *ct;
          p.type = *vt;
          p.name = words[4];
        } else if (words.size() == 3) {
          const auto t = scalar_type(words[1]);
          if (!t) fail("unknown property type '" + words[1] + "'", words[2]);
          p.type = *t;
          p.name = words[2];
        } else {
          fail("bad property line");
        }
        data_.elements.back().properties.push_back(std::move(p));
      } else if (words[0] == "obj_info") {
        continue;
      } else {
        pos_ = line_start_;
        fail("unknown header keyword '" + words[0] + "'");
      }
    }
    if (!format_seen) fail("missing format line");
    for (const Element& e : data_.elements) {
      if (e.name == "vertex") {
        data_.positions.resize(e.count, Vec3::Zero());
        bool x = false, y = false, z = false, nx = false, ny = false, nz = false;
        for (const Property& p : e.properties) {
          x |= p.name == "x";
          y |= p.name == "y";
          z |= p.name == "z";
          nx |= p.name == "nx";
          ny |= p.name == "ny";
          nz |= p.name == "nz";
        }
        if (!x || !y || !z) fail("vertex element needs x, y, z properties", "vertex");
        data_.has_normals = nx && ny && nz;
        if (data_.has_normals) data_.normals.resize(e.count, Vec3::Zero());
      } else if (e.name == "face") {
        data_.faces.resize(e.count);
      }
    }
  }

  double scalar(ScalarType t, const std::string& field) {
    if (data_.binary) {
      const std::size_t n = type_size(t);
      if (pos_ + n > b_.size()) fail("truncated binary data", field);
      const char* p = b_.data() + pos_;
      pos_ += n;
      switch (t) {
        case ScalarType::kInt8:
          return load<std::int8_t>(p);
        case ScalarType::kUInt8:
          return load<std::uint8_t>(p);
        case ScalarType::kInt16:
          return load<std::int16_t>(p);
        case ScalarType::kUInt16:
          return load<std::uint16_t>(p);
        case ScalarType::kInt32:
          return load<std::int32_t>(p);
        case ScalarType::kUInt32:
          return load<std::uint32_t>(p);
        case ScalarType::kFloat32:
          return load<float>(p);
        case ScalarType::kFloat64:
          return load<double>(p);
      }
      return 0.0;
    }
    while (pos_ < b_.size() && std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
    if (pos_ >= b_.size()) fail("unexpected end of data", field);
    std::size_t end = pos_;
    while (end < b_.size() && !std::isspace(static_cast<unsigned char>(b_[end]))) ++end;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(b_.data() + pos_, b_.data() + end, v);
    if (ec != std::errc() || ptr != b_.data() + end) fail("malformed number", field);
    pos_ = end;
    return v;
  }

  void record(const Element& e, std::size_t i) {
    const std::string base = e.name + "[" + std::to_string(i) + "]";
    for (const Property& p : e.properties) {
      const std::string field = base + "." + p.name;
      if (p.is_list) {
        const double count = scalar(p.count_type, field);
        if (count < 0 || count != std::floor(count)) fail("bad list length", field);
        std::vector<double> values(static_cast<std::size_t>(count));
        for (double& v : values) v = scalar(p.type, field);
        if (e.name == "face" && (p.name == "vertex_indices" || p.name == "vertex_index")) {
          if (values.size() != 3) fail("only triangle faces are supported", field);
          for (int c = 0; c < 3; ++c) {
            if (values[c] != std::floor(values[c])) fail("non-integer vertex index", field);
            data_.faces[i][c] = static_cast<int>(values[c]);
          }
        }
        continue;
      }
      const double v = scalar(p.type, field);
      if (e.name != "vertex") continue;
      if (p.name == "x") data_.positions[i].x() = v;
      if (p.name == "y") data_.positions[i].y() = v;
      if (p.name == "z") data_.positions[i].z() = v;
      if (data_.has_normals) {
        if (p.name == "nx") data_.normals[i].x() = v;
        if (p.name == "ny") data_.normals[i].y() = v;
        if (p.name == "nz") data_.normals[i].z() = v;
      }
    }
  }

  std::string_view b_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
  PlyData data_;
};

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename T>
void append(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

std::string write_ply(const Points& positions, const Points* normals, const std::vector<Face>* faces,
                      const std::vector<std::pair<std::string, std::string>>& comments, PlyFormat format) {
  std::string out = "ply\n";
  out += format == PlyFormat::kAscii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
  for (const auto& [k, v] : comments) out += "comment " + k + " " + v + "\n";
  out += "element vertex " + std::to_string(positions.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (normals) out += "property double nx\nproperty double ny\nproperty double nz\n";
  if (faces) {
    out += "element face " + std::to_string(faces->size()) + "\n";
    out += "property list uchar int vertex_indices\n";
  }
  out += "end_header\n";
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (format == PlyFormat::kAscii) {
      out += format_double(positions[i].x()) + " " + format_double(positions[i].y()) + " " +
             format_double(positions[i].z());
      if (normals) {
        out += " " + format_double((*normals)[i].x()) + " " + format_double((*normals)[i].y()) + " " +
               format_double((*normals)[i].z());
      }
      out += "\n";
    } else {
      for (int c = 0; c < 3; ++c) append(out, positions[i][c]);
      if (normals) {
        for (int c = 0; c < 3; ++c) append(out, (*normals)[i][c]);
      }
    }
  }
  if (faces) {
    for (const Face& f : *faces) {
      if (format == PlyFormat::kAscii) {
        out += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " + std::to_string(f[2]) + "\n";
      } else {
        append<std::uint8_t>(out, 3);
        for (int c = 0; c < 3; ++c) append<std::int32_t>(out, f[c]);
      }
    }
  }
  return out;
}

}  // namespace

std::string cloud_to_ply(const PointCloudFrame& cloud, PlyFormat format) {
  cloud.validate();
  return write_ply(cloud.points, nullptr, nullptr,
                   {{"frame", std::string(to_string(cloud.frame))},
                    {"label", std::string(to_string(cloud.label))},
                    {"timestamp", format_double(cloud.timestamp)}},
                   format);
}

PointCloudFrame cloud_from_ply(std::string_view bytes) {
  PlyData data = PlyReader(bytes).read();
  PointCloudFrame cloud;
  cloud.points = std::move(data.positions);
  try {
    if (data.comments.count("frame")) cloud.frame = frame_from_string(data.comments["frame"]);
    if (data.comments.count("label")) cloud.label = cloud_label_from_string(data.comments["label"]);
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), ParseError::kUnknownOffset, "comment");
  }
  if (data.comments.count("timestamp")) {
    const std::string& s = data.comments["timestamp"];
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), cloud.timestamp);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ParseError("malformed timestamp comment", ParseError::kUnknownOffset, "comment.timestamp");
    }
  }
  wrap_validation("invalid point cloud", [&] {
    cloud.validate();
    return 0;
  });
  return cloud;
}

std::string mesh_to_ply(const SceneMesh& mesh, PlyFormat format) {
  mesh.validate();
  return write_ply(mesh.vertices, &mesh.normals, &mesh.faces, {}, format);
}

SceneMesh mesh_from_ply(std::string_view bytes) {
  PlyData data = PlyReader(bytes).read();
  if (!data.has_normals) {
    throw ParseError("mesh PLY needs nx, ny, nz vertex properties", ParseError::kUnknownOffset, "vertex");
  }
  SceneMesh mesh;
  mesh.vertices = std::move(data.positions);
  mesh.normals = std::move(data.normals);
  mesh.faces = std::move(data.faces);
  mesh.validate();  // ValidationError for out-of-range indices, bad normals
  return mesh;
}

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

namespace {
template <typename Fn>
auto with_path(const std::filesystem::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset(), e.field());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}
}  // namespace

MotionSequence read_motion(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  return with_path(path, [&] { return motion_from_json(text); });
}
void write_motion(const std::filesystem::path& path, const MotionSequence& motion) {
  write_file(path, motion_to_json(motion));
}
Points read_trajectory(const std::filesystem::path& path, Frame expected) {
  const std::string text = read_file(path);
  return with_path(path, [&] { return trajectory_from_json(text, expected); });
}
void write_trajectory(const std::filesystem::path& path, const Points& positions, Frame frame) {
  write_file(path, trajectory_to_json(positions, frame));
}
RigidTransform read_transform(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  return with_path(path, [&] { return transform_from_json(text); });
}
void write_transform(const std::filesystem::path& path, const RigidTransform& transform) {
  write_file(path, transform_to_json(transform));
}
body::BodyTemplate read_template(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  return with_path(path, [&] { return template_from_json(text); });
}
void write_template(const std::filesystem::path& path, const body::BodyTemplate& tmpl) {
  write_file(path, template_to_json(tmpl));
}
PointCloudFrame read_cloud(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return with_path(path, [&] { return cloud_from_ply(bytes); });
}
void write_cloud(const std::filesystem::path& path, const PointCloudFrame& cloud, PlyFormat format) {
  write_file(path, cloud_to_ply(cloud, format));
}
SceneMesh read_mesh(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return with_path(path, [&] { return mesh_from_ply(bytes); });
}
void write_mesh(const std::filesystem::path& path, const SceneMesh& mesh, PlyFormat format) {
  write_file(path, mesh_to_ply(mesh, format));
}

}  // namespace scenefit::io
