#include "cnsc/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cnsc/errors.hpp"
#include "json.hpp"

namespace cnsc {

namespace {

using json = nlohmann::json;

constexpr char kB64[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::string b64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const unsigned v = (unsigned(bytes[i]) << 16) | (unsigned(bytes[i + 1]) << 8) |
                       unsigned(bytes[i + 2]);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back(kB64[v & 63]);
  }
  const std::size_t rem = bytes.size() - i;
  if (rem == 1) {
    const unsigned v = unsigned(bytes[i]) << 16;
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rem == 2) {
    const unsigned v = (unsigned(bytes[i]) << 16) | (unsigned(bytes[i + 1]) << 8);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<unsigned char> b64_decode(std::string_view s) {
  if (s.size() % 4 != 0) throw UserError("base64: length not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    int pad = 0;
    unsigned v = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = s[i + j];
      if (c == '=') {
        if (i + 4 != s.size() || j < 2) throw UserError("base64: bad padding");
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad > 0) throw UserError("base64: data after padding");
      const int d = b64_value(c);
      if (d < 0) throw UserError("base64: invalid character");
      v = (v << 6) | static_cast<unsigned>(d);
    }
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
    if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xFF));
  }
  return out;
}

}  // namespace

std::string encode_doubles(std::span<const double> v) {
  std::vector<unsigned char> bytes;
  bytes.reserve(v.size() * 8);
  for (double d : v) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(d);
    for (int s = 0; s < 64; s += 8)
      bytes.push_back(static_cast<unsigned char>((u >> s) & 0xFF));
  }
  return b64_encode(bytes);
}

std::vector<double> decode_doubles(std::string_view s) {
  const std::vector<unsigned char> bytes = b64_decode(s);
  if (bytes.size() % 8 != 0)
    throw UserError("decode_doubles: byte count not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t u = 0;
    for (int s = 7; s >= 0; --s) u = (u << 8) | bytes[i * 8 + static_cast<std::size_t>(s)];
    out[i] = std::bit_cast<double>(u);
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex16(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string hex8(std::uint64_t h) { return hex16(h).substr(0, 8); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path);
}

namespace {

void append_g17(std::string& s, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  s += buf;
}

}  // namespace

void write_cohort_csv(const std::string& path, const Cohort& c,
                      bool with_labels) {
  if (c.records.empty()) throw DomainError("cohort csv: no records");
  const std::size_t d = c.records.front().x.size();
  std::string out;
  out.reserve(c.records.size() * (d + 4) * 20);
  for (std::size_t i = 0; i < d; ++i) {
    out += "x" + std::to_string(i) + ",";
  }
  out += "a,t,d";
  if (with_labels) out += ",z";
  out += "\n";
  for (const auto& rec : c.records) {
    if (rec.x.size() != d) throw ShapeError("cohort csv: ragged covariates");
    for (std::size_t i = 0; i < d; ++i) {
      append_g17(out, rec.x[i]);
      out += ',';
    }
    out += std::to_string(rec.a);
    out += ',';
    append_g17(out, rec.t);
    out += ',';
    out += std::to_string(rec.d);
    if (with_labels) {
      out += ',';
      out += std::to_string(rec.z);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_double(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw UserError("csv line " + std::to_string(line_no) +
                    ": bad number '" + s + "'");
  return v;
}

int parse_binary(const std::string& s, std::size_t line_no, const char* col) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw UserError("csv line " + std::to_string(line_no) + ": column " + col +
                  " must be 0 or 1, got '" + s + "'");
}

}  // namespace

Cohort read_cohort_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw UserError("csv: empty file: " + path);
  const std::vector<std::string> header = split_csv_line(line);

  std::size_t d = 0;
  while (d < header.size() && header[d] == "x" + std::to_string(d)) ++d;
  if (d == 0) throw UserError("csv line 1: expected covariate columns x0..");
  const std::size_t rest = header.size() - d;
  bool with_labels;
  if (rest == 3 && header[d] == "a" && header[d + 1] == "t" &&
      header[d + 2] == "d") {
    with_labels = false;
  } else if (rest == 4 && header[d] == "a" && header[d + 1] == "t" &&
             header[d + 2] == "d" && header[d + 3] == "z") {
    with_labels = true;
  } else {
    throw UserError("csv line 1: expected header x0..x" + std::to_string(d - 1) +
                    ",a,t,d[,z]");
  }

  Cohort c;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw UserError("csv line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
    PatientRecord rec;
    rec.x.resize(d);
    for (std::size_t i = 0; i < d; ++i)
      rec.x[i] = parse_double(cells[i], line_no);
    rec.a = parse_binary(cells[d], line_no, "a");
    rec.t = parse_double(cells[d + 1], line_no);
    if (!(rec.t >= 0.0) || !std::isfinite(rec.t))
      throw UserError("csv line " + std::to_string(line_no) +
                      ": time must be finite and >= 0");
    rec.d = parse_binary(cells[d + 2], line_no, "d");
    if (with_labels) {
      const double z = parse_double(cells[d + 3], line_no);
      rec.z = static_cast<int>(z);
      if (static_cast<double>(rec.z) != z)
        throw UserError("csv line " + std::to_string(line_no) +
                        ": z must be an integer");
    }
    c.records.push_back(std::move(rec));
  }
  if (c.records.empty()) throw UserError("csv: no data rows: " + path);
  return c;
}

namespace {

json nested_b64(const std::vector<std::vector<double>>& vs) {
  json arr = json::array();
  for (const auto& v : vs) arr.push_back(encode_doubles(v));
  return arr;
}

std::vector<std::vector<double>> nested_from_b64(const json& arr,
                                                 const char* what) {
  if (!arr.is_array()) throw UserError(std::string("ground truth: ") + what);
  std::vector<std::vector<double>> out;
  for (const auto& e : arr) out.push_back(decode_doubles(e.get<std::string>()));
  return out;
}

}  // namespace

void save_ground_truth(const std::string& path, const GroundTruth& gt) {
  json j;
  j["format"] = "cnsc-ground-truth";
  j["version"] = 1;
  j["seed"] = gt.seed;
  j["k"] = gt.k;
  j["scenario"] = scenario_name(gt.scenario);
  std::vector<double> flat_centres;
  for (const auto& c : gt.centres) {
    flat_centres.push_back(c[0]);
    flat_centres.push_back(c[1]);
  }
  j["centres"] = encode_doubles(flat_centres);
  j["b0"] = nested_b64(gt.b0);
  j["g0"] = nested_b64(gt.g0);
  j["b1"] = nested_b64(gt.b1);
  j["g1"] = nested_b64(gt.g1);
  j["bc"] = encode_doubles(gt.bc);
  j["z"] = gt.z;
  j["p"] = encode_doubles(gt.p);
  j["t0"] = encode_doubles(gt.t0);
  j["t1"] = encode_doubles(gt.t1);
  j["censor"] = encode_doubles(gt.censor);
  write_text_file(path, j.dump(2) + "\n");
}

GroundTruth load_ground_truth(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw UserError("ground truth: invalid JSON in " + path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "cnsc-ground-truth")
      throw UserError("ground truth: wrong format tag in " + path);
    if (j.at("version").get<int>() != 1)
      throw UserError("ground truth: unsupported version in " + path);
    GroundTruth gt;
    gt.seed = j.at("seed").get<std::uint64_t>();
    gt.k = j.at("k").get<std::size_t>();
    gt.scenario = parse_scenario(j.at("scenario").get<std::string>());
    const std::vector<double> flat =
        decode_doubles(j.at("centres").get<std::string>());
    if (flat.size() != 2 * gt.k)
      throw UserError("ground truth: centre count mismatch");
    for (std::size_t g = 0; g < gt.k; ++g)
      gt.centres.push_back({flat[2 * g], flat[2 * g + 1]});
    gt.b0 = nested_from_b64(j.at("b0"), "b0");
    gt.g0 = nested_from_b64(j.at("g0"), "g0");
    gt.b1 = nested_from_b64(j.at("b1"), "b1");
    gt.g1 = nested_from_b64(j.at("g1"), "g1");
    gt.bc = decode_doubles(j.at("bc").get<std::string>());
    gt.z = j.at("z").get<std::vector<int>>();
    gt.p = decode_doubles(j.at("p").get<std::string>());
    gt.t0 = decode_doubles(j.at("t0").get<std::string>());
    gt.t1 = decode_doubles(j.at("t1").get<std::string>());
    gt.censor = decode_doubles(j.at("censor").get<std::string>());
    if (gt.b0.size() != gt.k || gt.g0.size() != gt.k || gt.b1.size() != gt.k ||
        gt.g1.size() != gt.k)
      throw UserError("ground truth: coefficient group count mismatch");
    return gt;
  } catch (const json::exception& e) {
    throw UserError("ground truth: missing or mistyped field in " + path +
                    ": " + e.what());
  }
}

namespace {

json net_to_json(const Mlp& net) {
  json j;
  json dims = json::array();
  if (!net.layers.empty()) dims.push_back(net.layers.front().in);
  json ws = json::array(), bs = json::array();
  for (const auto& l : net.layers) {
    dims.push_back(l.out);
    ws.push_back(encode_doubles(l.w));
    bs.push_back(encode_doubles(l.b));
  }
  j["dims"] = dims;
  j["w"] = ws;
  j["b"] = bs;
  return j;
}

Mlp net_from_json(const json& j, const char* what) {
  const std::vector<std::size_t> dims = j.at("dims").get<std::vector<std::size_t>>();
  if (dims.size() < 2)
    throw UserError(std::string("checkpoint: bad dims for ") + what);
  Mlp net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    net.layers.push_back(make_layer(
        dims[i], dims[i + 1], last ? Activation::Identity : Activation::Tanh));
  }
  const json& ws = j.at("w");
  const json& bs = j.at("b");
  if (ws.size() != net.layers.size() || bs.size() != net.layers.size())
    throw UserError(std::string("checkpoint: layer count mismatch for ") + what);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    std::vector<double> w = decode_doubles(ws[l].get<std::string>());
    std::vector<double> b = decode_doubles(bs[l].get<std::string>());
    if (w.size() != net.layers[l].w.size() || b.size() != net.layers[l].b.size())
      throw UserError(std::string("checkpoint: parameter shape mismatch for ") +
                      what);
    net.layers[l].w = std::move(w);
    net.layers[l].b = std::move(b);
  }
  return net;
}

}  // namespace

void save_checkpoint(const CnscModel& m, const std::string& path) {
  json j;
  j["format"] = "cnsc-checkpoint";
  j["version"] = 1;
  j["k"] = m.k;
  j["latent_dim"] = m.latent_dim;
  j["covariate_dim"] = m.covariate_dim;
  j["config_hash"] = m.config_hash;
  j["normalizers"] = {{"mean", encode_doubles(m.norm.mean)},
                      {"stddev", encode_doubles(m.norm.stddev)},
                      {"time_scale", encode_doubles({&m.norm.time_scale, 1})}};
  j["assign"] = net_to_json(m.assign_net);
  j["propensity"] = net_to_json(m.propensity_net);
  j["hazard"] = net_to_json(m.hazard_net.raw);
  j["latents"] = encode_doubles(m.latents);
  write_text_file(path, j.dump(2) + "\n");
}

CnscModel load_checkpoint(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw UserError("checkpoint: invalid JSON in " + path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "cnsc-checkpoint")
      throw UserError("checkpoint: wrong format tag in " + path);
    if (j.at("version").get<int>() != 1)
      throw UserError("checkpoint: unsupported version in " + path);
    CnscModel m;
    m.k = j.at("k").get<std::size_t>();
    m.latent_dim = j.at("latent_dim").get<std::size_t>();
    m.covariate_dim = j.at("covariate_dim").get<std::size_t>();
    m.config_hash = j.at("config_hash").get<std::uint64_t>();
    const json& n = j.at("normalizers");
    m.norm.mean = decode_doubles(n.at("mean").get<std::string>());
    m.norm.stddev = decode_doubles(n.at("stddev").get<std::string>());
    const std::vector<double> ts =
        decode_doubles(n.at("time_scale").get<std::string>());
    if (ts.size() != 1 || m.norm.mean.size() != m.covariate_dim ||
        m.norm.stddev.size() != m.covariate_dim)
      throw UserError("checkpoint: normalizer shape mismatch in " + path);
    m.norm.time_scale = ts[0];
    m.assign_net = net_from_json(j.at("assign"), "assign");
    m.propensity_net = net_from_json(j.at("propensity"), "propensity");
    m.hazard_net.raw = net_from_json(j.at("hazard"), "hazard");
    m.hazard_net.latent_dim = m.latent_dim;
    m.latents = decode_doubles(j.at("latents").get<std::string>());
    if (m.latents.size() != m.k * m.latent_dim)
      throw UserError("checkpoint: latent block size mismatch in " + path);
    if (m.assign_net.input_dim() != m.covariate_dim ||
        m.assign_net.output_dim() != m.k ||
        m.propensity_net.input_dim() != m.covariate_dim ||
        m.propensity_net.output_dim() != 1 ||
        m.hazard_net.raw.input_dim() != m.latent_dim + 1 ||
        m.hazard_net.raw.output_dim() != 2)
      throw UserError("checkpoint: network shapes inconsistent in " + path);
    return m;
  } catch (const json::exception& e) {
    throw UserError("checkpoint: missing or mistyped field in " + path + ": " +
                    e.what());
  }
}

namespace {

json config_to_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["depth"] = c.depth;
  j["width"] = c.width;
  j["latent_dim"] = c.latent_dim;
  j["k"] = c.k;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["adjusted"] = c.adjusted;
  return j;
}

}  // namespace

std::string train_report_json(const TrainReport& r) {
  json j;
  j["config"] = config_to_json(r.config);
  j["config_hash"] = config_hash(r.config);
  j["val_trace"] = r.val_trace;
  j["best_epoch"] = r.best_epoch;
  j["best_val"] = r.best_val;
  j["test_nll"] = r.test_nll;
  j["propensity_val_ce"] = r.propensity_val_ce;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump(2) + "\n";
}

std::string metric_report_json(const MetricReport& r) {
  json j;
  j["rand_index"] = r.rand_index;
  j["ise_per_group"] = r.ise_per_group;
  j["group_matching"] = r.group_matching;
  j["ise_pop"] = r.ise_pop;
  j["test_nll"] = r.test_nll;
  json rm = json::array();
  for (const auto& pair : r.rmst_per_group)
    rm.push_back({{"control", pair[0]}, {"treated", pair[1]}});
  j["rmst_per_group"] = rm;
  j["importance"] = r.importance;
  j["horizon"] = r.horizon;
  return j.dump(2) + "\n";
}

std::string ksweep_json(const std::vector<KSweepEntry>& entries,
                        std::size_t selected_k) {
  json arr = json::array();
  for (const auto& e : entries) {
    json je;
    je["k"] = e.k;
    je["fold_nll"] = e.fold_nll;
    je["mean_nll"] = e.mean_nll;
    je["std_nll"] = e.std_nll;
    arr.push_back(je);
  }
  json j;
  j["entries"] = arr;
  j["selected_k"] = selected_k;
  return j.dump(2) + "\n";
}

void write_ksweep_csv(const std::string& path,
                      const std::vector<KSweepEntry>& entries) {
  if (entries.empty()) throw DomainError("ksweep csv: no entries");
  std::string out = "k,mean_nll,std_nll";
  for (std::size_t f = 0; f < entries.front().fold_nll.size(); ++f)
    out += ",nll_fold_" + std::to_string(f);
  out += "\n";
  for (const auto& e : entries) {
    out += std::to_string(e.k);
    out += ',';
    append_g17(out, e.mean_nll);
    out += ',';
    append_g17(out, e.std_nll);
    for (double v : e.fold_nll) {
      out += ',';
      append_g17(out, v);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

void write_effect_curves_csv(const std::string& path,
                             const std::vector<EffectCurve>& est,
                             const std::vector<EffectCurve>& truth) {
  if (est.empty()) throw DomainError("effect curves: nothing to write");
  const std::size_t n = est.front().grid.size();
  for (const auto& c : est)
    if (c.grid.size() != n || c.values.size() != n)
      throw ShapeError("effect curves: grids differ");
  if (!truth.empty() && truth.size() != est.size())
    throw ShapeError("effect curves: truth group count mismatch");
  for (const auto& c : truth)
    if (c.grid.size() != n || c.values.size() != n)
      throw ShapeError("effect curves: grids differ");

  std::string out = "t";
  for (std::size_t g = 0; g < est.size(); ++g)
    out += ",est_g" + std::to_string(g);
  for (std::size_t g = 0; g < truth.size(); ++g)
    out += ",true_g" + std::to_string(g);
  out += "\n";
  for (std::size_t i = 0; i < n; ++i) {
    append_g17(out, est.front().grid[i]);
    for (const auto& c : est) {
      out += ',';
      append_g17(out, c.values[i]);
    }
    for (const auto& c : truth) {
      out += ',';
      append_g17(out, c.values[i]);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

}  // namespace cnsc
