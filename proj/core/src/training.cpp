#include <prism/training.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prism::training {

namespace {

// Stream tags for the independent random sources inside one training run.
// Data streams are owned by the caller; these cover scheduling, masks, and
// attack draws, so matched-seed runs with different M consume identical
// data and attack sequences.
constexpr std::uint64_t kScheduleStream = 1;
constexpr std::uint64_t kMaskStreamBase = 1u << 20;
constexpr std::uint64_t kAttackStreamBase = 2u << 20;

std::vector<int> uniform_subset(int population, int count, Rng& rng) {
  std::vector<int> ids(static_cast<std::size_t>(population));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < count; ++i) {
    const auto j =
        static_cast<std::size_t>(i) +
        static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(population - i)));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(count));
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

void TrainingConfig::validate() const {
  if (dimension < 1) throw std::invalid_argument("TrainingConfig: dimension must be >= 1");
  if (shared_per_round < 1 || shared_per_round > dimension)
    throw std::invalid_argument("TrainingConfig: shared_per_round must lie in [1, dimension]");
  if (!(step_size > 0.0)) throw std::invalid_argument("TrainingConfig: step_size must be > 0");
  if (n_iterations < 0) throw std::invalid_argument("TrainingConfig: negative n_iterations");
  if (n_clients < 1) throw std::invalid_argument("TrainingConfig: n_clients must be >= 1");
  if (participants_per_round < 1 || participants_per_round > n_clients)
    throw std::invalid_argument(
        "TrainingConfig: participants_per_round must lie in [1, n_clients]");
}

SelectionMask sample_mask(int dimension, int n_shared, Rng& rng) {
  if (n_shared < 1 || n_shared > dimension)
    throw std::invalid_argument("sample_mask: n_shared must lie in [1, dimension]");
  SelectionMask mask;
  mask.indices = uniform_subset(dimension, n_shared, rng);
  return mask;
}

std::vector<int> schedule_participants(int n_clients, int count, Rng& rng) {
  if (count < 1 || count > n_clients)
    throw std::invalid_argument("schedule_participants: count must lie in [1, n_clients]");
  return uniform_subset(n_clients, count, rng);
}

double local_step(ClientState& client, const GlobalState& global, const Sample& sample,
                  double step_size) {
  const auto dim = client.local_model.size();
  if (global.global_model.size() != dim || sample.features.size() != dim)
    throw std::invalid_argument("local_step: dimension mismatch");

  // Mixed model: global values at the previously shared coordinates, own
  // values elsewhere.
  ModelVector mixed = client.local_model;
  for (int d : client.last_mask.indices) mixed[d] = global.global_model[d];

  const double err = sample.target - mixed.dot(sample.features);
  client.local_model = mixed + step_size * err * sample.features;
  return err;
}

MaskedUpdate uplink(const ClientState& client, int client_id, const SelectionMask& mask,
                    const std::optional<ModelVector>& perturbation) {
  MaskedUpdate update;
  update.client_id = client_id;
  update.mask = mask;
  update.values.reserve(mask.indices.size());
  const bool attack = client.is_byzantine && perturbation.has_value();
  for (int d : mask.indices) {
    double v = client.local_model[d];
    if (attack) v += (*perturbation)[d];
    update.values.push_back(v);
  }
  return update;
}

GlobalState aggregate(const GlobalState& previous, const std::vector<MaskedUpdate>& uplinks) {
  if (uplinks.empty()) throw std::invalid_argument("aggregate: no uplinks");

  std::vector<std::size_t> order(uplinks.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return uplinks[a].client_id < uplinks[b].client_id;
  });

  ModelVector acc = ModelVector::Zero(previous.global_model.size());
  for (std::size_t idx : order) {
    const MaskedUpdate& u = uplinks[idx];
    ModelVector contribution = previous.global_model;
    for (std::size_t i = 0; i < u.mask.indices.size(); ++i)
      contribution[u.mask.indices[i]] = u.values[i];
    acc += contribution;
  }

  GlobalState next;
  next.global_model = acc / static_cast<double>(uplinks.size());
  next.iteration = previous.iteration + 1;
  return next;
}

std::vector<ClientState> make_clients(const TrainingConfig& config, int n_byzantine) {
  config.validate();
  if (n_byzantine < 0 || n_byzantine > config.n_clients)
    throw std::invalid_argument("make_clients: n_byzantine out of range");
  std::vector<ClientState> clients(static_cast<std::size_t>(config.n_clients));
  for (int k = 0; k < config.n_clients; ++k) {
    clients[static_cast<std::size_t>(k)].local_model = ModelVector::Zero(config.dimension);
    clients[static_cast<std::size_t>(k)].is_byzantine = k < n_byzantine;
  }
  return clients;
}

TrainingRun run_training(const TrainingConfig& config, std::vector<ClientState>& clients,
                         const SampleStream& stream, const attacks::TrainingAttackConfig& attack,
                         const ModelVector& true_weights, const Rng& trial_rng) {
  config.validate();
  attack.validate();
  if (static_cast<int>(clients.size()) != config.n_clients)
    throw std::invalid_argument("run_training: client count mismatch");
  if (true_weights.size() != config.dimension)
    throw std::invalid_argument("run_training: reference weight dimension mismatch");

  Rng schedule_rng = trial_rng.fork(kScheduleStream);
  std::vector<Rng> mask_rng, attack_rng;
  mask_rng.reserve(clients.size());
  attack_rng.reserve(clients.size());
  for (std::size_t k = 0; k < clients.size(); ++k) {
    mask_rng.push_back(trial_rng.fork(kMaskStreamBase + k));
    attack_rng.push_back(trial_rng.fork(kAttackStreamBase + k));
  }

  TrainingRun run;
  run.final_state.global_model = ModelVector::Zero(config.dimension);
  run.mse.reserve(static_cast<std::size_t>(config.n_iterations));
  run.mse_db.reserve(static_cast<std::size_t>(config.n_iterations));

  double initial_mse = true_weights.squaredNorm();
  if (initial_mse <= 0.0) initial_mse = 1.0;

  std::vector<MaskedUpdate> uplinks;
  uplinks.reserve(static_cast<std::size_t>(config.participants_per_round));

  for (int n = 0; n < config.n_iterations; ++n) {
    const std::vector<int> participants =
        schedule_participants(config.n_clients, config.participants_per_round, schedule_rng);
    uplinks.clear();

    for (int k : participants) {
      ClientState& client = clients[static_cast<std::size_t>(k)];
      // First participation: the downlink mask plays the role of the
      // client's previous-round mask, so sample it fresh.
      if (client.last_mask.indices.empty())
        client.last_mask =
            sample_mask(config.dimension, config.shared_per_round, mask_rng[k]);

      local_step(client, run.final_state, stream(k), config.step_size);
      run.comm.scalars_down += config.shared_per_round;

      const SelectionMask up_mask =
          sample_mask(config.dimension, config.shared_per_round, mask_rng[k]);

      std::optional<ModelVector> delta;
      if (client.is_byzantine) {
        ++run.comm.attack_opportunities;
        delta = attacks::training_perturbation(attack, config.dimension, attack_rng[k]);
        if (delta) {
          ++run.comm.attack_events;
          double energy = 0.0;
          for (int d : up_mask.indices) energy += (*delta)[d] * (*delta)[d];
          run.comm.attack_energy_sum += energy;
        }
      }

      uplinks.push_back(uplink(client, k, up_mask, delta));
      client.last_mask = up_mask;
      run.comm.scalars_up += config.shared_per_round;
      run.comm.mask_indices_up += config.shared_per_round;
    }

    run.final_state = aggregate(run.final_state, uplinks);

    const double mse = (run.final_state.global_model - true_weights).squaredNorm();
    run.mse.push_back(mse);
    run.mse_db.push_back(10.0 * std::log10(std::max(mse, 1e-300)));

    if (config.divergence_guard > 0.0 && mse > config.divergence_guard * initial_mse)
      throw DivergenceError("training diverged at iteration " + std::to_string(n) +
                            " (mse=" + std::to_string(mse) + ")");
  }

  return run;
}

}  // namespace prism::training
