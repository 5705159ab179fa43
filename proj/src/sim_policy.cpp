#include "aeon/cluster_sim.hpp"

#include <algorithm>

namespace aeon {

namespace {

struct Load {
    ServerId id;
    std::int64_t work;
    std::size_t active;
};

} // namespace

std::vector<std::tuple<ContextId, ServerId, ServerId>> ClusterSim::policy_step()
{
    std::vector<std::tuple<ContextId, ServerId, ServerId>> moves;
    const PolicySpec &p = sc_.policy;
    auto movable = [&](const ContextId &ctx) {
        if (in_flight_.count(ctx))
            return false;
        auto it = last_moved_.find(ctx);
        return it == last_moved_.end() || now_ - it->second >= p.window;
    };
    auto pool = [&] {
        std::vector<ServerId> out;
        for (const auto &[id, s] : servers_)
            if (s.alive && !s.draining)
                out.push_back(id);
        return out;
    };
    auto move = [&](const ContextId &ctx, ServerId src, ServerId dst) {
        migrate(ctx, dst);
        moves.emplace_back(ctx, src, dst);
    };
    // contexts already heading to a server count there
    std::map<ServerId, std::size_t> projected;
    for (const auto &[id, s] : servers_)
        projected[id] = s.active_window.size();
    for (const auto &[ctx, m] : in_flight_) {
        if (projected[m.src] > 0 && servers_.at(m.src).active_window.count(ctx))
            --projected[m.src];
        ++projected[m.dst];
    }

    if (p.kind == PolicySpec::server_contention) {
        auto cap = static_cast<std::size_t>(std::max(1, p.max_contexts));
        for (ServerId s : pool()) {
            std::vector<ContextId> active;
            for (const auto &[ctx, n] : servers_.at(s).active_window)
                if (movable(ctx))
                    active.push_back(ctx);
            while (projected[s] > cap && !active.empty()) {
                ContextId ctx = active.back();
                active.pop_back();
                ServerId dst = -1;
                for (ServerId d : pool())
                    if (d != s && projected[d] < cap && (dst < 0 || projected[d] < projected[dst]))
                        dst = d;
                if (dst < 0) {
                    if (server_count() >= sc_.max_servers)
                        break;
                    dst = add_server();
                    projected[dst] = 0;
                }
                move(ctx, s, dst);
                --projected[s];
                ++projected[dst];
            }
        }
        if (moves.empty()) {
            auto servers = pool();
            std::size_t total = 0;
            for (ServerId s : servers)
                total += projected[s];
            auto n = servers.size();
            bool draining_now = false;
            for (const auto &[id, s] : servers_)
                draining_now = draining_now || (s.alive && s.draining);
            if (!draining_now && static_cast<int>(n) > sc_.min_servers &&
                static_cast<double>(total) <= static_cast<double>((n - 1) * cap) * p.scale_in_fraction) {
                ServerId victim = servers.front();
                for (ServerId s : servers)
                    if (projected[s] < projected[victim] || (projected[s] == projected[victim] && s > victim))
                        victim = s;
                servers_.at(victim).draining = true;
            }
        }
    } else if (p.kind == PolicySpec::resource_utilization) {
        double denom = static_cast<double>(std::max(1, sc_.capacity)) * static_cast<double>(std::max<Tick>(1, p.window));
        std::map<ServerId, double> util;
        for (ServerId s : pool())
            util[s] = static_cast<double>(servers_.at(s).work_window) / denom;
        for (ServerId s : pool()) {
            if (util[s] <= p.upper + p.threshold)
                continue;
            std::vector<std::pair<std::int64_t, ContextId>> busy;
            for (const auto &[ctx, n] : servers_.at(s).active_window)
                if (movable(ctx))
                    busy.emplace_back(n, ctx);
            if (busy.size() < 2)
                continue;
            std::sort(busy.begin(), busy.end());
            ServerId dst = -1;
            for (const auto &[d, u] : util)
                if (d != s && u < p.lower && (dst < 0 || u < util[dst]))
                    dst = d;
            if (dst < 0) {
                if (server_count() >= sc_.max_servers)
                    continue;
                dst = add_server();
                util[dst] = 0;
            }
            // the lighter half moves
            for (std::size_t i = 0; i < busy.size() / 2; ++i)
                move(busy[i].second, s, dst);
        }
        if (moves.empty()) {
            auto servers = pool();
            bool all_low = static_cast<int>(servers.size()) > sc_.min_servers;
            for (ServerId s : servers)
                all_low = all_low && util[s] < p.lower - p.threshold;
            bool draining_now = false;
            for (const auto &[id, s] : servers_)
                draining_now = draining_now || (s.alive && s.draining);
            if (all_low && !draining_now) {
                ServerId victim = servers.front();
                for (ServerId s : servers)
                    if (util[s] < util[victim] || (util[s] == util[victim] && s > victim))
                        victim = s;
                servers_.at(victim).draining = true;
            }
        }
    }

    // draining servers hand everything off, active contexts to servers with room
    for (auto &[id, sv] : servers_) {
        if (!sv.alive || !sv.draining)
            continue;
        std::vector<ContextId> hosted(sv.hosted.begin(), sv.hosted.end());
        for (const auto &ctx : hosted) {
            if (!movable(ctx))
                continue;
            ServerId dst = -1;
            for (ServerId d : pool()) {
                if (dst < 0 || projected[d] < projected[dst] ||
                    (projected[d] == projected[dst] && servers_.at(d).hosted.size() < servers_.at(dst).hosted.size()))
                    dst = d;
            }
            if (dst < 0)
                break;
            bool active = sv.active_window.count(ctx) > 0;
            move(ctx, id, dst);
            if (active)
                ++projected[dst];
        }
    }

    for (auto &[id, s] : servers_) {
        s.work_window = 0;
        s.active_window.clear();
    }
    last_policy_ = now_;
    return moves;
}

} // namespace aeon
