"""Sim-to-real synthetic data pipeline: toy scene rendering, unpaired
image translation, motion-primitive collision labeling, downstream task
networks, and evaluation, on a self-contained autodiff core."""

from .autodiff import Tensor, backward, l1_mean, loss_forward
from .cyclegan import (CycleGanConfig, CycleGanNets, TrainState, build_nets,
                       convert_image, cycle_loss, gan_loss, total_loss, train_cyclegan)
from .labeler import (SafetyConfig, VelocityDistribution, augment_velocity,
                      depth_to_points, label_grid, label_primitive)
from .labeler_oracle import oracle_label_grid
from .metrics import ConfusionMatrix, ScoredLabels, auroc, log_loss, miou
from .nn import (Adam, Parameter, Sgd, check_gradients, layer_forward, load_weights,
                 save_weights)
from .pipeline import (RunConfig, cmd_convert, cmd_experiment, cmd_generate,
                       cmd_label, cmd_rollout, cmd_train_gan, cmd_train_task,
                       render_prediction_grid)
from .primitives import (PrimitiveGrid, Trajectory, VehicleState, build_grid,
                         grid_trajectories, simulate_primitive)
from .rollout import RolloutConfig, net_policy, oracle_policy, rollout
from .scene import (CameraIntrinsics, Pose, Scene, SceneSpec, StyleTransform,
                    apply_style, generate_scene, render, sample_poses)
from .tasknets import (STOP, AvoidanceNet, SegNet, TaskDataset, TrainSpec,
                       predict_collision, predict_segmentation, select_action,
                       train_task_net)

__version__ = "0.1.0"
