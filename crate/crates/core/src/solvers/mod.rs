mod best_response;
mod exhaustive;
mod extract;
mod train;
mod value_iteration;

pub use best_response::{
    adversary_best_response, adversary_best_response_from, joint_occupancy, joint_q_values, BestResponse,
};
pub use exhaustive::{exhaustive_adversary_oracle, ENUMERATION_BUDGET};
pub use extract::{extract_oracle_policy, extract_state_policy, greedy_policy, policy_shape};
pub use train::{alternating_train, TrainConfig, TrainOutcome, TrainRound};
pub use value_iteration::{contraction_iteration_bound, value_iteration, SolveReport};
