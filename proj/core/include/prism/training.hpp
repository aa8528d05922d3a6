// Partial-sharing online federated training: random coordinate masks, client
// scheduling, the masked local LMS recursion, uplink with an attack hook,
// and the per-round server aggregation.

#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include <prism/attacks.hpp>
#include <prism/rng.hpp>
#include <prism/types.hpp>

namespace prism::training {

struct TrainingConfig {
  int dimension = 50;             // D
  int shared_per_round = 15;      // M coordinates exchanged per round
  double step_size = 0.05;
  int n_iterations = 1000;
  int participants_per_round = 10;
  int n_clients = 100;
  // Abort when MSE exceeds this multiple of the initial MSE; <= 0 disables.
  double divergence_guard = 1e3;
  void validate() const;
};

/// Sorted set of the coordinates a client exchanges this round.
struct SelectionMask {
  std::vector<int> indices;
};

struct ClientState {
  ModelVector local_model;
  SelectionMask last_mask;  // mask of the previous uplink, reused on downlink
  bool is_byzantine = false;
};

struct GlobalState {
  ModelVector global_model;
  int iteration = 0;
};

/// Masked update as transmitted: coordinate indices plus their values.
struct MaskedUpdate {
  int client_id = -1;
  SelectionMask mask;
  std::vector<double> values;  // aligned with mask.indices
};

/// Wire and attack accounting for one training run.
struct CommLedger {
  long long scalars_up = 0;        // model values uplinked
  long long scalars_down = 0;      // model values downlinked
  long long mask_indices_up = 0;   // index integers accompanying uplinks
  long long attack_opportunities = 0;
  long long attack_events = 0;
  double attack_energy_sum = 0.0;  // sum of squared norms of masked perturbations
};

struct TrainingRun {
  GlobalState final_state;
  std::vector<double> mse;     // per-iteration squared distance to the reference weights
  std::vector<double> mse_db;  // 10 log10(mse)
  CommLedger comm;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Produces the next training sample for a client.
using SampleStream = std::function<Sample(int client_id)>;

/// Uniform M-subset of [0, dimension).
SelectionMask sample_mask(int dimension, int n_shared, Rng& rng);

/// Uniform `count`-subset of client ids, sorted ascending.
std::vector<int> schedule_participants(int n_clients, int count, Rng& rng);

/// One masked LMS step: the client blends the downlinked global coordinates
/// (at its previous mask) into its local model, then takes a gradient step.
/// Returns the prediction error.
double local_step(ClientState& client, const GlobalState& global, const Sample& sample,
                  double step_size);

/// Masked transmission of the local model. A Byzantine client adds the
/// masked perturbation when one is supplied; benign clients transmit their
/// exact values.
MaskedUpdate uplink(const ClientState& client, int client_id, const SelectionMask& mask,
                    const std::optional<ModelVector>& perturbation);

/// Coordinate d of the new global model is the participant average of
/// (uplinked value if d is in that participant's mask, else the previous
/// global value). Summation runs in ascending client-id order.
GlobalState aggregate(const GlobalState& previous, const std::vector<MaskedUpdate>& uplinks);

/// Runs the full training loop. `clients` must hold one state per client;
/// empty masks are initialized on first participation. `true_weights` is the
/// reference for the MSE trajectory.
TrainingRun run_training(const TrainingConfig& config, std::vector<ClientState>& clients,
                         const SampleStream& stream, const attacks::TrainingAttackConfig& attack,
                         const ModelVector& true_weights, const Rng& trial_rng);

/// K zero-initialized clients; ids below `n_byzantine` are Byzantine.
std::vector<ClientState> make_clients(const TrainingConfig& config, int n_byzantine);

}  // namespace prism::training
