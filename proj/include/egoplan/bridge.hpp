// Candidate sources for inference-time selection: the in-process
// perturbation generator and an external generator speaking JSON lines over
// a child process's stdio or a unix-domain socket.
//
// Request, one line:
//   {"v":1,"id":"...","q":[14],"g":[14],"N":n,"T":t,"seed":s,"obs":{...}}
// where "obs" carries inline frames {"rig","frames":[{"mount","rows","cols",
// "depth":[...]}]} or is replaced by "obs_ref":"...".
// Replies, N lines then a terminator:
//   {"id":"...","index":i,"traj":[[14] x T]}
//   {"id":"...","done":true}
// Any other shape, a missing candidate or no terminator within the deadline
// makes the source fall back to perturbation candidates for that request.
#pragma once

#include "egoplan/io.hpp"
#include "egoplan/planning.hpp"
#include "egoplan/sensing.hpp"

#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

extern char** environ;

namespace egoplan {

struct CandidateRequest {
  std::string id;
  JointVector q, g;
  std::size_t n = 1;
  int horizon = 15;
  std::uint64_t seed = 0;
  const RigObservation* obs = nullptr;
  std::string obs_ref;  // used instead of inline frames when non-empty
};

struct CandidateOutcome {
  CandidateSet set;
  bool fallback = false;
  std::string warning;  // why the fallback happened
};

class CandidateSource {
 public:
  virtual ~CandidateSource() = default;
  virtual CandidateOutcome request(const CandidateRequest& req) = 0;
  virtual std::string name() const = 0;
};

/// Candidate 0 is the joint-space line from q to g; the rest perturb it.
class PerturbationSource : public CandidateSource {
 public:
  PerturbationSource(const RobotModel& model, double amplitude) : model_(model), amplitude_(amplitude) {}

  CandidateOutcome request(const CandidateRequest& req) override {
    CandidateOutcome out;
    out.set = perturb_candidates(linear_interpolate(req.q, req.g, req.horizon), req.n,
                                 derive_seed(req.seed, "planning.candidates"), amplitude_, model_);
    return out;
  }
  std::string name() const override { return "perturbation"; }

 private:
  const RobotModel& model_;
  double amplitude_;
};

// ---------------------------------------------------------------------------
// Line transport.

/// Newline-framed text over a pair of file descriptors (may be the same one).
class LineChannel {
 public:
  LineChannel(int in_fd, int out_fd) : in_(in_fd), out_(out_fd) {}
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  virtual ~LineChannel() {
    if (out_ >= 0 && out_ != in_) ::close(out_);
    if (in_ >= 0) ::close(in_);
  }

  bool write_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = send_or_write(out_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  /// Next line, or nothing on EOF, error or deadline.
  std::optional<std::string> read_line(std::chrono::steady_clock::time_point deadline) {
    for (;;) {
      const auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{in_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) return std::nullopt;
      char chunk[65536];
      const ssize_t n = ::read(in_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return std::nullopt;
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  static ssize_t send_or_write(int fd, const char* p, std::size_t n) {
    const ssize_t r = ::send(fd, p, n, MSG_NOSIGNAL);
    if (r < 0 && errno == ENOTSOCK) return ::write(fd, p, n);
    return r;
  }

  int in_, out_;
  std::string buf_;
};

/// Child process started through /bin/sh with its stdin/stdout piped.
/// SIGPIPE is ignored process-wide once a child is spawned so that a dead
/// child surfaces as a write error.
class ProcessChannel : public LineChannel {
 public:
  static std::unique_ptr<ProcessChannel> spawn(const std::string& command) {
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw Error(ErrorKind::planner, "candidate process: pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw Error(ErrorKind::planner, "candidate process: pipe failed");
    }
    ::signal(SIGPIPE, SIG_IGN);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&fa, from_child[1], STDOUT_FILENO);
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) posix_spawn_file_actions_addclose(&fa, fd);
    const std::string script = "exec " + command;
    const char* argv[] = {"/bin/sh", "-c", script.c_str(), nullptr};
    pid_t pid = -1;
    const int rc = ::posix_spawn(&pid, "/bin/sh", &fa, nullptr, const_cast<char* const*>(argv), environ);
    posix_spawn_file_actions_destroy(&fa);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
      ::close(to_child[1]);
      ::close(from_child[0]);
      throw Error(ErrorKind::planner, "candidate process: cannot start '" + command + "'");
    }
    return std::unique_ptr<ProcessChannel>(new ProcessChannel(from_child[0], to_child[1], pid));
  }

  ~ProcessChannel() override {
    if (pid_ > 0) {
      ::kill(pid_, SIGTERM);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

 private:
  ProcessChannel(int in_fd, int out_fd, pid_t pid) : LineChannel(in_fd, out_fd), pid_(pid) {}
  pid_t pid_;
};

inline std::unique_ptr<LineChannel> connect_unix(const std::string& path) {
  sockaddr_un addr{};
  if (path.size() >= sizeof addr.sun_path) throw Error(ErrorKind::invalid_argument, "socket path too long: " + path);
  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorKind::planner, "candidate socket: socket() failed");
  addr.sun_family = AF_UNIX;
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw Error(ErrorKind::planner, "candidate socket: cannot connect to " + path);
  }
  return std::make_unique<LineChannel>(fd, fd);
}

// ---------------------------------------------------------------------------
// Protocol.

inline Json observation_json(const RigObservation& obs) {
  Json frames = Json::array();
  for (const auto& f : obs.frames) {
    Json depth = Json::array();
    for (double d : f.frame.depth) depth.push_back(d);
    frames.push_back({{"mount", f.mount_id}, {"rows", f.frame.rows}, {"cols", f.frame.cols},
                      {"timestamp", f.frame.timestamp}, {"depth", depth}});
  }
  return {{"rig", rig_name(obs.kind)}, {"frames", frames}};
}

inline Json request_json(const CandidateRequest& r) {
  Json j{{"v", 1}, {"id", r.id}, {"q", io::joints(r.q)}, {"g", io::joints(r.g)},
         {"N", r.n}, {"T", r.horizon}, {"seed", r.seed}};
  if (!r.obs_ref.empty()) j["obs_ref"] = r.obs_ref;
  else if (r.obs) j["obs"] = observation_json(*r.obs);
  return j;
}

/// Parses a candidate trajectory, checks shape and start, snaps the start to
/// q exactly and clamps to joint limits.
inline Trajectory parse_candidate(const Json& traj, const CandidateRequest& req, const RobotModel& model) {
  if (!traj.is_array() || traj.size() != static_cast<std::size_t>(req.horizon))
    throw Error(ErrorKind::validation, "candidate must have " + std::to_string(req.horizon) + " waypoints");
  Trajectory t;
  for (const auto& w : traj) t.waypoints.push_back(io::joints(w));
  if (t.front().max_abs_diff(req.q) > 1e-6) throw Error(ErrorKind::validation, "candidate does not start at q");
  t[0] = req.q;
  for (auto& w : t.waypoints) w = clamp_to_limits(model, w);
  return t;
}

/// Talks to an external generator; a fresh channel is opened after any
/// failure.
class StreamSource : public CandidateSource {
 public:
  using Connector = std::function<std::unique_ptr<LineChannel>()>;

  StreamSource(const RobotModel& model, Connector connect, std::string label, double amplitude,
               std::chrono::milliseconds timeout = std::chrono::milliseconds(2000))
      : model_(model), connect_(std::move(connect)), label_(std::move(label)),
        fallback_(model, amplitude), timeout_(timeout) {}

  static std::unique_ptr<StreamSource> process(const RobotModel& model, const std::string& command, double amplitude,
                                               std::chrono::milliseconds timeout = std::chrono::milliseconds(2000)) {
    return std::make_unique<StreamSource>(
        model, [command] { return std::unique_ptr<LineChannel>(ProcessChannel::spawn(command)); },
        "process:" + command, amplitude, timeout);
  }

  static std::unique_ptr<StreamSource> socket(const RobotModel& model, const std::string& path, double amplitude,
                                              std::chrono::milliseconds timeout = std::chrono::milliseconds(2000)) {
    return std::make_unique<StreamSource>(model, [path] { return connect_unix(path); }, "socket:" + path,
                                          amplitude, timeout);
  }

  CandidateOutcome request(const CandidateRequest& req) override {
    try {
      CandidateOutcome out;
      out.set = exchange(req);
      out.set.provenance = CandidateProvenance::policy;
      return out;
    } catch (const Error& e) {
      channel_.reset();
      CandidateOutcome out = fallback_.request(req);
      out.fallback = true;
      out.warning = label_ + ": " + e.what() + "; using perturbation candidates";
      return out;
    }
  }

  std::string name() const override { return label_; }

 private:
  CandidateSet exchange(const CandidateRequest& req) {
    if (!channel_) channel_ = connect_();
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    if (!channel_->write_line(request_json(req).dump()))
      throw Error(ErrorKind::planner, "write failed");
    std::vector<std::optional<Trajectory>> got(req.n);
    std::size_t received = 0;
    for (;;) {
      const auto line = channel_->read_line(deadline);
      if (!line) throw Error(ErrorKind::planner, "no complete reply within " + std::to_string(timeout_.count()) + " ms");
      Json j;
      try {
        j = Json::parse(*line);
      } catch (const Json::exception&) {
        throw Error(ErrorKind::validation, "malformed reply line");
      }
      try {
        if (!j.is_object() || j.value("id", std::string()) != req.id)
          throw Error(ErrorKind::validation, "reply id mismatch");
        if (j.contains("error")) throw Error(ErrorKind::planner, "generator error: " + j["error"].dump());
        if (j.value("done", false)) break;
        const auto idx = j.at("index").get<std::size_t>();
        if (idx >= req.n || got[idx]) throw Error(ErrorKind::validation, "bad or repeated candidate index");
        got[idx] = parse_candidate(j.at("traj"), req, model_);
        ++received;
      } catch (const Json::exception& e) {
        throw Error(ErrorKind::validation, std::string("malformed reply: ") + e.what());
      }
    }
    if (received != req.n)
      throw Error(ErrorKind::validation, "expected " + std::to_string(req.n) + " candidates, got " + std::to_string(received));
    CandidateSet set;
    for (auto& t : got) set.candidates.push_back(std::move(*t));
    return set;
  }

  const RobotModel& model_;
  Connector connect_;
  std::string label_;
  PerturbationSource fallback_;
  std::chrono::milliseconds timeout_;
  std::unique_ptr<LineChannel> channel_;
};

}  // namespace egoplan
