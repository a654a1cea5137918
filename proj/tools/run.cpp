#include "run.hpp"

#include <Eigen/Core>
#include <sstream>

#include "ntd/error.hpp"
#include "ntd/parallel.hpp"

#ifndef NTD_VERSION
#define NTD_VERSION "0.0.0"
#endif

namespace ntd::cli {

namespace fs = std::filesystem;

namespace {

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace

Run::Run(RunConfig cfg)
    : cfg_(std::move(cfg)), threads_(resolve_threads(cfg_.threads)), dir_(cfg_.output_dir),
      start_(std::chrono::steady_clock::now()) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create output directory " + dir_.string() + ": " + ec.message());
}

std::ofstream Run::open(const std::string& name) {
  std::ofstream out(dir_ / name, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + (dir_ / name).string());
  outputs_.push_back({{"file", name}, {"rows", 0}, {"errors", 0}});
  return out;
}

void Run::set_rows(const std::string& name, std::size_t rows, std::size_t errors) {
  for (auto& o : outputs_) {
    if (o["file"] == name) {
      o["rows"] = rows;
      o["errors"] = errors;
    }
  }
  element_errors_ += errors;
}

PanelDataset Run::load_input() {
  if (cfg_.input.empty()) throw Error(ErrorKind::kInvalidSpec, "no input panel (--input or input = ...)");
  LoadOptions opt;
  opt.schema = cfg_.schema;
  opt.skip_malformed = cfg_.skip_malformed;
  std::vector<MalformedRow> bad;
  PanelDataset data = load_panel_file(cfg_.input, opt, &bad);
  input_ = {{"path", cfg_.input},
            {"fnv1a", hex64(file_hash(cfg_.input))},
            {"rows", data.num_rows()},
            {"units", data.num_units()},
            {"clusters", data.num_clusters()},
            {"malformed_rows", bad.size()}};
  if (!bad.empty()) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& m : bad) rows.push_back({{"line", m.line}, {"column", m.column}, {"message", m.message}});
    std::ofstream out = open("malformed_rows.json");
    out << rows.dump(2) << '\n';
    set_rows("malformed_rows.json", bad.size());
  }
  return data;
}

void Run::write_manifest() const {
  std::ostringstream text;
  write_config(text, cfg_);
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::istringstream lines(text.str());
  for (std::string line; std::getline(lines, line);) {
    auto eq = line.find(" = ");
    config[line.substr(0, eq)] = line.substr(eq + 3);
  }
  double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  nlohmann::ordered_json m;
  m["tool"] = "ntd";
  m["command"] = cfg_.command;
  m["status"] = element_errors_ == 0 ? "ok" : "partial";
  m["partial"] = element_errors_ > 0;
  m["element_errors"] = element_errors_;
  m["config_hash"] = hex64(config_hash(cfg_));
  m["seed"] = cfg_.seed;
  m["threads"] = threads_;
  m["runtime_seconds"] = runtime;
  m["versions"] = {{"ntd", NTD_VERSION},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
  if (!input_.is_null()) m["input"] = input_;
  for (const auto& [k, v] : extra_.items()) m[k] = v;
  m["outputs"] = outputs_;
  m["config"] = config;
  std::ofstream out(dir_ / "manifest.json", std::ios::binary);
  out << m.dump(2) << '\n';
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string treat_label(int d) { return is_never(d) ? std::string("never") : std::to_string(d); }

}  // namespace ntd::cli
