#include "selfpose/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace selfpose {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::None: return "none";
    case Provenance::Annotation: return "annotation";
    case Provenance::Svm: return "svm";
    case Provenance::Cluster: return "cluster";
    case Provenance::Detection: return "detection";
  }
  return "none";
}

Provenance parse_provenance(std::string_view s) {
  for (Provenance p : {Provenance::None, Provenance::Annotation, Provenance::Svm,
                       Provenance::Cluster, Provenance::Detection}) {
    if (provenance_name(p) == s) return p;
  }
  throw DataError("unknown provenance '" + std::string(s) + "'");
}

namespace {

json keypoints_json(const Skeleton& s) {
  if (!s.all_finite()) throw DataError("cannot serialize a skeleton with non-finite coordinates");
  json kp = json::array();
  for (int j = 0; j < kNumJoints; ++j) kp.push_back({s.keypoints()(0, j), s.keypoints()(1, j)});
  return kp;
}

Skeleton keypoints_from_json(const json& kp) {
  if (!kp.is_array() || kp.size() != std::size_t(kNumJoints)) {
    throw DataError("keypoints must be an array of 14 [x, y] pairs");
  }
  Skeleton s;
  for (int j = 0; j < kNumJoints; ++j) {
    const json& p = kp[j];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw DataError("keypoint " + std::to_string(j) + " is not an [x, y] pair");
    }
    s.keypoints()(0, j) = p[0].get<double>();
    s.keypoints()(1, j) = p[1].get<double>();
  }
  return s;
}

template <typename F>
auto with_line_context(std::size_t line_no, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("line " + std::to_string(line_no) + ": " + e.what());
  }
}

bool blank(const std::string& line) {
  for (char c : line) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

std::string format_pose_record(const PoseRecord& r) {
  json j;
  j["image_id"] = r.image_id;
  if (r.action) j["action"] = std::string(action_name(*r.action));
  j["keypoints"] = keypoints_json(r.skeleton);
  if (r.score) {
    if (!std::isfinite(*r.score)) throw DataError("cannot serialize a non-finite score");
    j["score"] = *r.score;
  }
  if (r.stage) j["stage"] = *r.stage;
  j["provenance"] = std::string(provenance_name(r.provenance));
  return j.dump();
}

PoseRecord parse_pose_record(const std::string& line) {
  try {
    const json j = json::parse(line);
    if (!j.is_object()) throw DataError("pose record must be a JSON object");
    PoseRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    if (auto it = j.find("action"); it != j.end() && !it->is_null()) {
      r.action = parse_action(it->get<std::string>());
    }
    r.skeleton = keypoints_from_json(j.at("keypoints"));
    if (auto it = j.find("score"); it != j.end() && !it->is_null()) r.score = it->get<double>();
    if (auto it = j.find("stage"); it != j.end() && !it->is_null()) r.stage = it->get<int>();
    if (auto it = j.find("provenance"); it != j.end()) {
      r.provenance = parse_provenance(it->get<std::string>());
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(e.what());
  }
}

std::vector<PoseRecord> parse_pose_records(const std::string& text) {
  std::vector<PoseRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    out.push_back(with_line_context(line_no, [&] { return parse_pose_record(line); }));
  }
  return out;
}

std::vector<PoseRecord> read_pose_records(const std::string& path) {
  return parse_pose_records(read_file(path));
}

void write_pose_records(const std::string& path, const std::vector<PoseRecord>& records) {
  std::string text;
  for (const auto& r : records) {
    text += format_pose_record(r);
    text += '\n';
  }
  write_file_atomic(path, text);
}

PoseRecord to_record(const CandidatePose& c, Provenance p) {
  return {c.image_id, c.action, c.skeleton, c.score, c.stage, p};
}

CandidatePose to_candidate(const PoseRecord& r) {
  CandidatePose c;
  c.skeleton = r.skeleton;
  c.score = r.score.value_or(0.0);
  c.image_id = r.image_id;
  c.stage = r.stage.value_or(1);
  c.action = r.action;
  return c;
}

std::string format_split(const DatasetSplit& split) {
  std::string out;
  for (const auto& e : split.fs) {
    json j{{"set", "fs"}, {"image_id", e.image_id}, {"action", std::string(action_name(e.action))}};
    j["keypoints"] = keypoints_json(e.annotation);
    out += j.dump() + '\n';
  }
  for (const auto& e : split.ws) {
    out += json{{"set", "ws"}, {"image_id", e.image_id}, {"action", std::string(action_name(e.action))}}
               .dump() +
           '\n';
  }
  for (const auto& id : split.us) out += json{{"set", "us"}, {"image_id", id}}.dump() + '\n';
  for (const auto& id : split.backgrounds) out += json{{"set", "bg"}, {"image_id", id}}.dump() + '\n';
  return out;
}

DatasetSplit parse_split(const std::string& text) {
  DatasetSplit split;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    with_line_context(line_no, [&] {
      const json j = json::parse(line);
      const auto set = j.at("set").get<std::string>();
      const auto id = j.at("image_id").get<std::string>();
      if (set == "fs") {
        split.fs.push_back({id, keypoints_from_json(j.at("keypoints")),
                            parse_action(j.at("action").get<std::string>())});
      } else if (set == "ws") {
        split.ws.push_back({id, parse_action(j.at("action").get<std::string>())});
      } else if (set == "us") {
        split.us.push_back(id);
      } else if (set == "bg") {
        split.backgrounds.push_back(id);
      } else {
        throw DataError("unknown set '" + set + "'");
      }
      return 0;
    });
  }
  return split;
}

DatasetSplit read_split(const std::string& path) { return parse_split(read_file(path)); }

void write_split(const std::string& path, const DatasetSplit& split) {
  write_file_atomic(path, format_split(split));
}

GrayRaster parse_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  const auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  const auto number = [&](const char* what) {
    const std::string tok = next_token();
    int v = 0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size() || v <= 0) {
      throw DataError(std::string("PGM: bad ") + what);
    }
    return v;
  };
  if (next_token() != "P5") throw DataError("PGM: expected P5 magic");
  const int w = number("width");
  const int h = number("height");
  const int maxval = number("maxval");
  if (maxval > 255) throw DataError("PGM: only 8-bit images are supported");
  ++pos;  // single whitespace before the raster
  if (bytes.size() < pos + std::size_t(w) * h) throw DataError("PGM: truncated raster");
  GrayRaster img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y) = static_cast<unsigned char>(bytes[pos + std::size_t(y) * w + x]) / double(maxval);
    }
  }
  return img;
}

GrayRaster read_pgm(const std::string& path) { return parse_pgm(read_file(path)); }

std::string format_pgm(const GrayRaster& image) {
  std::string out = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const double v = std::clamp(image.at(x, y), 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  return out;
}

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) { return parse(read_file(path)); }

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  return std::nullopt;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw DataError("config key '" + key + "': cannot parse '" + s + "'");
  }
  return v;
}

}  // namespace

void KeyValueConfig::read(const std::string& key, double& out) const {
  if (auto v = get(key)) out = parse_number<double>(key, *v);
}
void KeyValueConfig::read(const std::string& key, int& out) const {
  if (auto v = get(key)) out = parse_number<int>(key, *v);
}
void KeyValueConfig::read(const std::string& key, std::uint64_t& out) const {
  if (auto v = get(key)) out = parse_number<std::uint64_t>(key, *v);
}
void KeyValueConfig::read(const std::string& key, bool& out) const {
  if (auto v = get(key)) {
    if (*v == "true" || *v == "1" || *v == "on") out = true;
    else if (*v == "false" || *v == "0" || *v == "off") out = false;
    else throw DataError("config key '" + key + "': expected a boolean, got '" + *v + "'");
  }
}
void KeyValueConfig::read(const std::string& key, std::string& out) const {
  if (auto v = get(key)) out = *v;
}

}  // namespace selfpose
