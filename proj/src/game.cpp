#include "bottleneck/game.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace bottleneck {

namespace {

constexpr std::array<Move, 2> kMoves{Move::go, Move::nogo};

Move other(Move m) { return m == Move::go ? Move::nogo : Move::go; }

std::vector<Profile> all_profiles() {
    std::vector<Profile> out;
    for (Move r : kMoves)
        for (Move c : kMoves) out.push_back({r, c});
    return out;
}

} // namespace

BimatrixGame BimatrixGame::scaled(double k) const {
    BimatrixGame g = *this;
    for (auto& row : g.payoffs)
        for (auto& cell : row) cell = {cell.first * k, cell.second * k};
    return g;
}

BimatrixGame build_go_nogo_game(bool open_network) {
    BimatrixGame g;
    const double lone_goer = open_network ? 0.0 : 2.0;
    g.payoffs[0][0] = {1.0, 1.0};
    g.payoffs[0][1] = {lone_goer, 2.0};
    g.payoffs[1][0] = {2.0, lone_goer};
    g.payoffs[1][1] = {0.0, 0.0};
    return g;
}

std::vector<Profile> pure_nash(const BimatrixGame& g, bool weak) {
    std::vector<Profile> out;
    for (const Profile p : all_profiles()) {
        const double row_dev = g.at({other(p.row), p.col}).first - g.at(p).first;
        const double col_dev = g.at({p.row, other(p.col)}).second - g.at(p).second;
        const bool ok = weak ? (row_dev <= 0.0 && col_dev <= 0.0) : (row_dev < 0.0 && col_dev < 0.0);
        if (ok) out.push_back(p);
    }
    return out;
}

std::vector<Profile> social_optimum(const BimatrixGame& g) {
    const auto profiles = all_profiles();
    double best = -std::numeric_limits<double>::infinity();
    for (const Profile p : profiles) best = std::max(best, g.at(p).first + g.at(p).second);
    std::vector<Profile> out;
    for (const Profile p : profiles)
        if (g.at(p).first + g.at(p).second == best) out.push_back(p);
    return out;
}

std::string to_string(Move m) { return m == Move::go ? "Go" : "NoGo"; }

std::string to_string(Profile p) { return "(" + to_string(p.row) + "," + to_string(p.col) + ")"; }

std::string describe(const BimatrixGame& g, const std::string& title) {
    std::ostringstream os;
    auto list = [&](const std::vector<Profile>& ps) {
        std::string s = "{";
        for (std::size_t i = 0; i < ps.size(); ++i) s += (i ? ", " : "") + to_string(ps[i]);
        return s + "}";
    };
    os << title << "\n";
    os << "            Go        NoGo\n";
    for (Move r : kMoves) {
        os << (r == Move::go ? "  Go    " : "  NoGo  ");
        for (Move c : kMoves) {
            const auto& cell = g.at({r, c});
            os << "  (" << cell.first << ", " << cell.second << ")  ";
        }
        os << "\n";
    }
    os << "  weak Nash:      " << list(pure_nash(g, true)) << "\n";
    os << "  strict Nash:    " << list(pure_nash(g, false)) << "\n";
    os << "  social optimum: " << list(social_optimum(g)) << "\n";
    return os.str();
}

} // namespace bottleneck
