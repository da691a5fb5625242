#include "tfe/relabel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace tfe {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Future: return "future";
    case Strategy::Episode: return "episode";
    case Strategy::PerTask: return "pertask";
    case Strategy::Generate: return "generate";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (int i = 0; i < kNumStrategies; ++i) {
    const auto s = static_cast<Strategy>(i);
    if (strategy_name(s) == name) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown relabel strategy '" + std::string(name) + "'");
}

RelabelMix RelabelMix::only(Strategy s) {
  RelabelMix m;
  m.weights[static_cast<int>(s)] = 1.0;
  return m;
}

RelabelMix RelabelMix::fepg() {
  RelabelMix m;
  m.weights[static_cast<int>(Strategy::Episode)] = 0.5;
  m.weights[static_cast<int>(Strategy::PerTask)] = 0.25;
  m.weights[static_cast<int>(Strategy::Generate)] = 0.25;
  return m;
}

RelabelMix RelabelMix::parse(std::string_view text) {
  if (text == "fepg" || text == "FEPG") return fepg();
  RelabelMix m;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      m.weights[static_cast<int>(parse_strategy(item))] += 1.0;
      continue;
    }
    double w = 0.0;
    const auto num = item.substr(colon + 1);
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), w);
    if (ec != std::errc() || ptr != num.data() + num.size()) {
      throw Error(ErrorCode::InvalidArgument, "bad weight in relabel mix '" + std::string(item) + "'");
    }
    m.weights[static_cast<int>(parse_strategy(item.substr(0, colon)))] += w;
  }
  m.validate();
  return m;
}

std::string RelabelMix::to_string() const {
  std::string out;
  char buf[64];
  for (int i = 0; i < kNumStrategies; ++i) {
    if (weights[i] == 0.0) continue;
    std::snprintf(buf, sizeof(buf), "%s%s:%g", out.empty() ? "" : ",",
                  std::string(strategy_name(static_cast<Strategy>(i))).c_str(), weights[i]);
    out += buf;
  }
  return out;
}

void RelabelMix::validate() const {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative relabel weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "relabel weights must sum to 1");
  }
}

BackupSample RelabeledSample::backup() const {
  return {transition.task_id, transition.state.embedding(), transition.action,
          transition.next.embedding(), transition.terminal, hit, target.embedding};
}

// ---------------------------------------------------------------------------

ReplayStore::ReplayStore(std::size_t capacity, int radius, bool final_successor)
    : capacity_(capacity), radius_(radius), final_successor_(final_successor) {
  if (capacity == 0) throw Error(ErrorCode::InvalidArgument, "replay capacity must be positive");
  if (radius < 0 || radius > 1) throw Error(ErrorCode::InvalidArgument, "radius must be 0 or 1");
}

void ReplayStore::add_state(std::uint64_t task, const Embedding& e) {
  auto& idx = tasks_[task];
  const auto [it, inserted] = idx.slot.try_emplace(packed_key(e), idx.states.size(), 0);
  if (inserted) idx.states.push_back(e);
  ++it->second.second;
}

void ReplayStore::remove_state(std::uint64_t task, const Embedding& e) {
  auto& idx = tasks_[task];
  const auto it = idx.slot.find(packed_key(e));
  if (it == idx.slot.end() || --it->second.second > 0) return;
  // Swap-remove keeps the index dense.
  const std::size_t pos = it->second.first;
  idx.slot.erase(it);
  if (pos + 1 != idx.states.size()) {
    idx.states[pos] = idx.states.back();
    idx.slot[packed_key(idx.states[pos])].first = pos;
  }
  idx.states.pop_back();
  if (idx.states.empty()) tasks_.erase(task);
}

void ReplayStore::evict_front() {
  const EpisodeSpan ep = episodes_.front();
  episodes_.pop_front();
  lengths_.erase(ep.id);
  for (std::size_t k = 0; k < ep.length; ++k) {
    const Transition& tr = transitions_.front();
    remove_state(tr.task_id, tr.state.embedding());
    if (tr.terminal && !tr.next.dead) remove_state(tr.task_id, tr.next.embedding());
    transitions_.pop_front();
  }
  base_ += ep.length;
}

void ReplayStore::push(const Transition& tr) {
  const bool continues = !episodes_.empty() && episodes_.back().id == tr.episode_id;
  if (continues) {
    const EpisodeSpan& ep = episodes_.back();
    if (ep.closed) {
      throw Error(ErrorCode::ContractViolation,
                  "episode " + std::to_string(tr.episode_id) + " already terminated");
    }
    if (tr.t != static_cast<int>(ep.length)) {
      throw Error(ErrorCode::ContractViolation,
                  "non-contiguous t=" + std::to_string(tr.t) + " in episode " +
                      std::to_string(tr.episode_id) + ", expected " + std::to_string(ep.length));
    }
    if (transitions_.back().task_id != tr.task_id) {
      throw Error(ErrorCode::ContractViolation, "task changed within an episode");
    }
  } else {
    if (tr.t != 0) {
      throw Error(ErrorCode::ContractViolation,
                  "episode " + std::to_string(tr.episode_id) + " must start at t=0");
    }
    if (lengths_.count(tr.episode_id)) {
      throw Error(ErrorCode::ContractViolation,
                  "episode " + std::to_string(tr.episode_id) + " was already closed");
    }
    if (!episodes_.empty()) episodes_.back().closed = true;
    episodes_.push_back({tr.episode_id, base_ + transitions_.size(), 0, false});
  }
  transitions_.push_back(tr);
  auto& ep = episodes_.back();
  ++ep.length;
  ++lengths_[tr.episode_id];
  if (tr.terminal) ep.closed = true;
  add_state(tr.task_id, tr.state.embedding());
  if (tr.terminal && !tr.next.dead) add_state(tr.task_id, tr.next.embedding());
  while (transitions_.size() > capacity_ && episodes_.size() > 1) evict_front();
}

std::vector<Transition> ReplayStore::episode_of(std::size_t i) const {
  const Transition& tr = transitions_.at(i);
  const auto first = static_cast<std::ptrdiff_t>(i - static_cast<std::size_t>(tr.t));
  return {transitions_.begin() + first,
          transitions_.begin() + first + static_cast<std::ptrdiff_t>(episode_length(tr.episode_id))};
}

std::size_t ReplayStore::episode_length(std::int64_t episode_id) const {
  const auto it = lengths_.find(episode_id);
  return it == lengths_.end() ? 0 : it->second;
}

std::vector<Embedding> ReplayStore::task_states(std::uint64_t task_id) const {
  const auto it = tasks_.find(task_id);
  return it == tasks_.end() ? std::vector<Embedding>{} : it->second.states;
}

std::size_t ReplayStore::task_state_count(std::uint64_t task_id) const {
  const auto it = tasks_.find(task_id);
  return it == tasks_.end() ? 0 : it->second.states.size();
}

int ReplayStore::final_time(std::size_t i) const {
  const Transition& tr = transitions_.at(i);
  const std::size_t length = episode_length(tr.episode_id);
  const Transition& last = transitions_[i - static_cast<std::size_t>(tr.t) + length - 1];
  return static_cast<int>(last.next.dead || !final_successor_ ? length - 1 : length);
}

std::optional<ReplayStore::Relabel> ReplayStore::relabel(std::size_t i, Strategy strategy,
                                                         TargetGenerator* generator,
                                                         Rng& rng) const {
  const Transition& tr = transitions_.at(i);
  switch (strategy) {
    case Strategy::Future:
    case Strategy::Episode: {
      const std::size_t first = i - static_cast<std::size_t>(tr.t);
      const std::size_t last_t = static_cast<std::size_t>(final_time(i));
      std::size_t t_prime;
      if (strategy == Strategy::Future) {
        if (static_cast<std::size_t>(tr.t) >= last_t) {
          throw Error(ErrorCode::FutureEmpty, "no future states after the final transition");
        }
        t_prime = tr.t + 1 + uniform_index(rng, last_t - tr.t);
      } else {
        t_prime = uniform_index(rng, last_t + 1);
      }
      const std::size_t length = episode_length(tr.episode_id);
      const EnvState& state = t_prime < length ? transitions_[first + t_prime].state
                                               : transitions_[first + length - 1].next;
      return Relabel{target_of(state, radius_), static_cast<int>(t_prime)};
    }
    case Strategy::PerTask: {
      const auto& states = tasks_.at(tr.task_id).states;
      const Embedding& e = states[uniform_index(rng, states.size())];
      return Relabel{Target{e, radius_}, -1};
    }
    case Strategy::Generate: {
      if (!generator) {
        throw Error(ErrorCode::MissingGenerator, "generate relabeling needs a generator");
      }
      auto target = generator->generate(tr, rng);
      if (!target) return std::nullopt;
      target->radius = radius_;
      return Relabel{*target, -1};
    }
  }
  return std::nullopt;
}

std::vector<RelabeledSample> ReplayStore::sample_batch(const RelabelMix& mix,
                                                       std::size_t batch_size,
                                                       TargetGenerator* generator,
                                                       Rng& rng) const {
  if (transitions_.empty()) throw Error(ErrorCode::EmptyStore, "replay store is empty");
  mix.validate();
  if (mix.weight(Strategy::Generate) > 0.0 && !generator) {
    throw Error(ErrorCode::MissingGenerator, "relabel mix uses generate but no generator is set");
  }
  std::vector<RelabeledSample> batch;
  batch.reserve(batch_size);
  for (std::size_t n = 0; n < batch_size; ++n) {
    const std::size_t i = uniform_index(rng, transitions_.size());
    auto weights = mix.weights;
    std::optional<Relabel> r;
    Strategy s = Strategy::Episode;
    while (!r) {
      s = static_cast<Strategy>(sample_categorical(rng, weights));
      if (s == Strategy::Future && transitions_[i].t >= final_time(i)) {
        s = Strategy::Episode;
      }
      r = relabel(i, s, generator, rng);
      if (!r) {
        weights[static_cast<int>(Strategy::Generate)] = 0.0;
        if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
          weights[static_cast<int>(Strategy::Episode)] = 1.0;
        }
      }
    }
    RelabeledSample sample;
    sample.transition = transitions_[i];
    sample.target = r->target;
    sample.source_time = r->source_time;
    sample.strategy = s;
    sample.hit = indicator(sample.transition.next, sample.target, radius_);
    batch.push_back(std::move(sample));
  }
  return batch;
}

}  // namespace tfe
