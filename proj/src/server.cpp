#include "bottleneck/server.hpp"

#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace bottleneck {

using nlohmann::json;

namespace {

json info_json(const EnvInfo& i) {
    return {{"time", i.time},
            {"exited", i.exited},
            {"bottleneck_count", i.bottleneck_count},
            {"outflow", i.outflow},
            {"agents", i.agents},
            {"penetration", i.penetration},
            {"ignored_actions", i.ignored_actions}};
}

std::string error_reply(const std::string& msg) { return json{{"error", msg}}.dump(); }

void apply_overrides(EpisodeConfig& cfg, const json& o) {
    if (!o.is_object()) throw std::invalid_argument("config must be an object");
    for (const auto& [k, v] : o.items()) {
        if (k == "inflow") cfg.inflow = v.get<double>();
        else if (k == "penetration") cfg.p_lo = cfg.p_hi = v.get<double>();
        else if (k == "p_lo") cfg.p_lo = v.get<double>();
        else if (k == "p_hi") cfg.p_hi = v.get<double>();
        else if (k == "state_space") cfg.state_space = parse_state_space(v.get<std::string>());
        else if (k == "reroute") cfg.reroute = v.get<bool>();
        else if (k == "lane_change") cfg.lane_change = v.get<bool>();
        else if (k == "radar_cap") cfg.radar_cap = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
        else if (k == "warmup") cfg.warmup = v.get<double>();
        else if (k == "horizon") cfg.horizon = v.get<double>();
        else if (k == "action_repeat") cfg.action_repeat = v.get<int>();
        else throw std::invalid_argument("unknown config key: " + k);
    }
}

} // namespace

std::string encode_result(const EnvResult& r) {
    json obs = json::object(), dones = json::object();
    for (const auto& [id, o] : r.obs) obs[std::to_string(id)] = o;
    for (const auto& [id, d] : r.dones) dones[std::to_string(id)] = d;
    dones["__all__"] = r.done_all;
    return json{{"obs", obs}, {"reward", r.reward}, {"dones", dones}, {"info", info_json(r.info)}}.dump();
}

EnvSession::EnvSession(EpisodeConfig cfg) : base_(std::move(cfg)) { base_.validate(); }

std::string EnvSession::hello() const {
    return json{{"hello", "bottleneck-env"},
                {"version", kProtocolVersion},
                {"state_space", to_string(base_.state_space)},
                {"obs_size", observation_size(base_.state_space, base_.network.max_lanes())},
                {"action_low", -4.5 / 8.0},
                {"action_high", 2.6 / 8.0}}
        .dump();
}

std::string EnvSession::handle(const std::string& line, bool& closed) {
    closed = false;
    json req;
    try {
        req = json::parse(line);
    } catch (const std::exception& e) {
        return error_reply(std::string("malformed json: ") + e.what());
    }
    try {
        if (!req.is_object() || !req.contains("cmd") || !req["cmd"].is_string())
            return error_reply("request needs a string \"cmd\"");
        const std::string cmd = req["cmd"];
        if (cmd == "reset") {
            std::uint64_t seed = 0;
            if (req.contains("seed")) {
                if (!req["seed"].is_number_integer() || req["seed"].get<long long>() < 0)
                    return error_reply("seed must be a non-negative integer");
                seed = req["seed"].get<std::uint64_t>();
            }
            EpisodeConfig cfg = base_;
            if (req.contains("config")) apply_overrides(cfg, req["config"]);
            auto env = std::make_unique<BottleneckEnv>(cfg);
            const EnvResult r = env->reset(seed);
            env_ = std::move(env);
            return encode_result(r);
        }
        if (cmd == "step") {
            if (!env_) return error_reply("no episode; send reset first");
            if (env_->finished()) return error_reply("episode is over; send reset");
            ActionMap actions;
            if (req.contains("actions")) {
                const json& a = req["actions"];
                if (!a.is_object()) return error_reply("actions must be an object");
                for (const auto& [k, v] : a.items()) {
                    if (!v.is_number()) return error_reply("action for " + k + " is not a number");
                    std::size_t used = 0;
                    int id = 0;
                    try {
                        id = std::stoi(k, &used);
                    } catch (const std::exception&) {
                        used = 0;
                    }
                    if (used != k.size()) return error_reply("agent id is not an integer: " + k);
                    actions[id] = v.get<double>();
                }
            }
            return encode_result(env_->step(actions));
        }
        if (cmd == "close") {
            closed = true;
            env_.reset();
            return json{{"closed", true}}.dump();
        }
        return error_reply("unknown cmd: " + cmd);
    } catch (const std::exception& e) {
        return error_reply(e.what());
    }
}

void serve_stdio(std::istream& in, std::ostream& out, const EpisodeConfig& cfg) {
    EnvSession session(cfg);
    out << session.hello() << '\n' << std::flush;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        bool closed = false;
        out << session.handle(line, closed) << '\n' << std::flush;
        if (closed) break;
    }
}

namespace wire {

bool read_line(int fd, std::string& buffer, std::string& line) {
    while (true) {
        const auto nl = buffer.find('\n');
        if (nl != std::string::npos) {
            line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return true;
        }
        char chunk[4096];
        const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        buffer.append(chunk, static_cast<std::size_t>(n));
    }
}

bool write_line(int fd, const std::string& line) {
    std::string data = line + '\n';
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        off += static_cast<std::size_t>(n);
    }
    return true;
}

int connect_to(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("endpoint must be host:port: " + endpoint);
    const std::string host = endpoint.substr(0, colon), port = endpoint.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
        throw std::runtime_error("cannot resolve " + endpoint);
    int fd = -1;
    for (addrinfo* a = res; a; a = a->ai_next) {
        fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw std::runtime_error("cannot connect to " + endpoint);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return fd;
}

} // namespace wire

TcpServer::~TcpServer() { stop(); }

int TcpServer::listen_on(int port, const std::string& host) {
    if (running_) throw std::logic_error("server already running");
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("socket: " + std::string(std::strerror(errno)));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
        ::close(fd_);
        fd_ = -1;
        throw std::runtime_error("cannot resolve " + host);
    }
    const int rc = ::bind(fd_, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0 || ::listen(fd_, 64) != 0) {
        const std::string err = std::strerror(errno);
        ::close(fd_);
        fd_ = -1;
        throw std::runtime_error("bind/listen on port " + std::to_string(port) + ": " + err);
    }
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
}

void TcpServer::accept_loop(const std::function<void(int)>& handler) {
    running_ = true;
    thread_ = std::make_unique<std::thread>([this, handler] {
        while (running_) {
            pollfd p{fd_, POLLIN, 0};
            if (::poll(&p, 1, 100) <= 0) continue;
            const int c = ::accept(fd_, nullptr, nullptr);
            if (c < 0) continue;
            int one = 1;
            ::setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            std::lock_guard lock(mu_);
            conns_.push_back(c);
            sessions_.emplace_back([this, handler, c] {
                handler(c);
                std::lock_guard done(mu_);
                std::erase(conns_, c);
                ::close(c);
            });
        }
    });
}

int TcpServer::start_env(int port, const EpisodeConfig& cfg, const std::string& host) {
    cfg.validate();
    const int bound = listen_on(port, host);
    accept_loop([cfg](int fd) {
        EnvSession session(cfg);
        if (!wire::write_line(fd, session.hello())) return;
        std::string buffer, line;
        while (wire::read_line(fd, buffer, line)) {
            if (line.empty()) continue;
            bool closed = false;
            if (!wire::write_line(fd, session.handle(line, closed)) || closed) return;
        }
        // disconnect: the episode goes with the session
    });
    return bound;
}

int TcpServer::start_policy(int port, std::shared_ptr<Policy> policy, const std::string& host) {
    const int bound = listen_on(port, host);
    auto lock = std::make_shared<std::mutex>();
    accept_loop([policy, lock](int fd) {
        std::string buffer, line;
        while (wire::read_line(fd, buffer, line)) {
            if (line.empty()) continue;
            std::string reply;
            try {
                const json req = json::parse(line);
                if (req.value("cmd", "") != "act") throw std::invalid_argument("expected cmd \"act\"");
                ObsMap obs;
                for (const auto& [k, v] : req.at("obs").items()) obs[std::stoi(k)] = v.get<std::vector<double>>();
                ActionMap actions;
                {
                    std::lock_guard g(*lock);
                    actions = policy->act(obs);
                }
                json a = json::object();
                for (const auto& [id, x] : actions) a[std::to_string(id)] = x;
                reply = json{{"actions", a}}.dump();
            } catch (const std::exception& e) {
                reply = error_reply(e.what());
            }
            if (!wire::write_line(fd, reply)) return;
        }
    });
    return bound;
}

void TcpServer::wait() {
    while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(200));
}

void TcpServer::stop() {
    if (!thread_) return;
    running_ = false;
    thread_->join();
    thread_.reset();
    ::close(fd_);
    fd_ = -1;
    std::vector<std::thread> done;
    {
        std::lock_guard lock(mu_);
        for (int c : conns_) ::shutdown(c, SHUT_RDWR);
        done.swap(sessions_);
    }
    for (auto& t : done) t.join();
}

} // namespace bottleneck
