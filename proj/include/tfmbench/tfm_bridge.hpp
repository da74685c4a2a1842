#pragma once

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfmbench/classifier.hpp"
#include "tfmbench/common.hpp"

namespace tfmbench {
namespace detail {

/// Child process with line-oriented stdin/stdout. Used to talk to the
/// Python inference helper that hosts the real foundation-model runtimes.
class LineSubprocess {
 public:
  explicit LineSubprocess(const std::vector<std::string>& argv) : argv_(argv) {
    require(!argv.empty(), "subprocess: empty command");
    int to_child[2], from_child[2];
    require(::pipe(to_child) == 0 && ::pipe(from_child) == 0,
            "subprocess: pipe() failed");
    pid_ = ::fork();
    require(pid_ >= 0, "subprocess: fork() failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      std::vector<char*> args;
      args.reserve(argv.size() + 1);
      for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
      args.push_back(nullptr);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
  }

  ~LineSubprocess() {
    if (in_fd_ >= 0) ::close(in_fd_);
    if (out_fd_ >= 0) ::close(out_fd_);
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  LineSubprocess(const LineSubprocess&) = delete;
  LineSubprocess& operator=(const LineSubprocess&) = delete;

  void write_line(const std::string& line) {
    std::string payload = line + "\n";
    const char* data = payload.data();
    std::size_t left = payload.size();
    while (left > 0) {
      ssize_t n = ::write(in_fd_, data, left);
      require(n > 0, "subprocess: write to '", argv_[0],
              "' failed (helper gone?)");
      data += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    while (true) {
      auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      char chunk[4096];
      ssize_t n = ::read(out_fd_, chunk, sizeof chunk);
      require(n > 0, "subprocess: '", command_line(),
              "' closed its output before replying");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::string command_line() const {
    std::string s;
    for (const auto& a : argv_) s += (s.empty() ? "" : " ") + a;
    return s;
  }

 private:
  std::vector<std::string> argv_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::string buffer_;
};

}  // namespace detail

inline const char* kCheckpointCacheEnv = "TFMBENCH_CHECKPOINT_CACHE";
inline const char* kTfmHelperEnv = "TFMBENCH_TFM_HELPER";

/// Adapter over an external inference helper speaking newline-delimited
/// JSON. The helper owns the actual foundation-model runtime and its
/// checkpoint cache; this side only moves tables and probabilities.
///
/// Protocol (one JSON object per line, request -> response):
///   {"cmd":"hello"}                         -> {"ok":true,"version":...}
///   {"cmd":"fit","mode":"icl"|"finetune",
///    "features":[[...]],"labels":[...],
///    "config":{...}}                        -> {"ok":true,...}
///   {"cmd":"predict","features":[[...]]}    -> {"ok":true,"proba":[...]}
///   {"cmd":"shutdown"}                      -> {"ok":true}
/// Any {"ok":false,"error":...} reply is surfaced as an exception.
class BridgeTfmClassifier : public Classifier {
 public:
  BridgeTfmClassifier(std::string registry_name, ClassifierKind kind,
                      std::string backend_key, std::string mode,
                      const Hyperparameters& hyper)
      : name_(std::move(registry_name)),
        kind_(kind),
        backend_key_(std::move(backend_key)),
        mode_(std::move(mode)),
        hyper_(hyper) {
    if (hyper_.contains("helper")) {
      for (const auto& part : hyper_["helper"])
        helper_argv_.push_back(part.get<std::string>());
    }
    cache_dir_ = hyper_.value("cache_dir", "");
    if (cache_dir_.empty())
      if (const char* env = std::getenv(kCheckpointCacheEnv))
        cache_dir_ = env;
  }

  const std::string& name() const override { return name_; }
  ClassifierKind kind() const override { return kind_; }
  std::string backend_version() const override {
    return version_.empty() ? backend_key_ + "/unspawned" : version_;
  }
  Hyperparameters hyperparameters() const override { return hyper_; }

  void fit(const TabularDataset& train) override {
    check_fit_preconditions(train);
    ensure_spawned();
    nlohmann::json req = {{"cmd", "fit"},
                          {"mode", mode_},
                          {"features", matrix_to_json(train.features)},
                          {"labels", train.labels}};
    if (mode_ == "finetune")
      req["config"] = hyper_.contains("finetune") ? hyper_["finetune"]
                                                  : nlohmann::json::object();
    fit_info_ = roundtrip(req);
    n_features_ = train.features.cols();
    fitted_ = true;
  }

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& query) const override {
    require(fitted_, name_, ": predict before fit");
    check_query_width(query.cols(), n_features_);
    nlohmann::json reply = roundtrip(
        {{"cmd", "predict"}, {"features", matrix_to_json(query)}});
    auto proba = reply.at("proba").get<std::vector<double>>();
    require(proba.size() == static_cast<std::size_t>(query.rows()), name_,
            ": helper returned ", proba.size(), " probabilities for ",
            query.rows(), " rows");
    Eigen::VectorXd p(query.rows());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p(i) = proba[static_cast<std::size_t>(i)];
      require(p(i) >= 0.0 && p(i) <= 1.0, name_,
              ": helper probability out of [0,1]: ", p(i));
    }
    return p;
  }

  /// Extra fields from the fit reply (fine-tuning step counts and the like).
  const nlohmann::json& fit_info() const { return fit_info_; }

 private:
  std::vector<std::string> default_helper() const {
    std::string script;
    if (const char* env = std::getenv(kTfmHelperEnv)) script = env;
    else {
      // Installed layout: tools/tfm_helper.py next to the working tree.
      for (const char* candidate :
           {"tools/tfm_helper.py", "../tools/tfm_helper.py"})
        if (std::filesystem::exists(candidate)) {
          script = candidate;
          break;
        }
    }
    require(!script.empty(), name_,
            ": no inference helper found; set ", kTfmHelperEnv,
            " to the helper script or pass \"helper\" in the backend options");
    return {"python3", script};
  }

  void ensure_spawned() {
    if (process_) return;
    std::vector<std::string> argv =
        helper_argv_.empty() ? default_helper() : helper_argv_;
    argv.push_back("--backend");
    argv.push_back(backend_key_);
    if (!cache_dir_.empty()) {
      argv.push_back("--cache-dir");
      argv.push_back(cache_dir_);
    }
    process_ = std::make_unique<detail::LineSubprocess>(argv);
    nlohmann::json hello = roundtrip({{"cmd", "hello"}});
    version_ = hello.value("version", backend_key_ + "/unknown");
  }

  nlohmann::json roundtrip(const nlohmann::json& request) const {
    require(process_ != nullptr, name_, ": helper not running");
    // One request/reply in flight at a time; concurrent const predicts must
    // not interleave on the pipe.
    std::lock_guard<std::mutex> lock(io_mutex_);
    process_->write_line(request.dump());
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(process_->read_line());
    } catch (const nlohmann::json::parse_error& e) {
      fail(name_, ": helper sent malformed JSON: ", e.what());
    }
    if (!reply.value("ok", false))
      fail(name_, ": helper error: ",
           reply.value("error", std::string("(no message)")));
    return reply;
  }

  static nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  }

  std::string name_;
  ClassifierKind kind_;
  std::string backend_key_, mode_;
  Hyperparameters hyper_;
  std::vector<std::string> helper_argv_;
  std::string cache_dir_;
  std::unique_ptr<detail::LineSubprocess> process_;
  mutable std::mutex io_mutex_;
  std::string version_;
  nlohmann::json fit_info_;
  Eigen::Index n_features_ = 0;
  bool fitted_ = false;
};

}  // namespace tfmbench
