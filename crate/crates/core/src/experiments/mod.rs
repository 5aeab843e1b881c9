//! Size-generalization experiments: synthetic tasks with closed-form
//! targets, AdamW training with best-validation selection, and evaluation of
//! trained models on inputs larger than those seen in training.

mod cache;
mod eval;
mod task;
mod train;

pub use cache::{cache_path, decode, encode, load_or_generate, write_atomic, CacheHeader};
pub use eval::{budget_spec, eval_sets, evaluate_sizes, family_name, run_sizegen, EvalSets, SizeGenRow, SizeGenRun};
pub use task::{
    gaussian_block_mi, gaussian_entropy, gen_task, generate, shape_cloud, triangle_density, GraphGen, Item, Pool,
    PopSub, Task, TaskSpec, BOX_SHAPE, TLB_P,
};
pub use train::{split, task_split, train, AdamW, EpochStats, Learner, PairModel, TrainConfig, TrainResult};
