"""Shared parameter store for asynchronous training workers

Workers take a consistent snapshot to compute forward and backward passes (staleness is permitted) and
apply each gradient batch atomically under one lock.
"""

import logging
import threading

from exercise_goal_setting.constants import NetworkDefaults
from exercise_goal_setting.network import Gradients, HybridNetParams, OptimizerState, apply_gradients

logger = logging.getLogger(__name__)


class ParameterStore(object):
    """Creates a ParameterStore object holding the shared network, its optimizer state and the global counters

    Args:
        params (HybridNetParams): initial shared parameters
        optimizer_state (OptimizerState, optional): shared RMS-propagation state. Created for ``params`` if omitted.
        max_norm (float, optional): global-norm gradient clip. Defaults to 40.
    """

    def __init__(self, params: HybridNetParams, optimizer_state: OptimizerState = None,
                 max_norm: float = NetworkDefaults.grad_clip) -> None:

        self._lock = threading.Lock()
        self._params = params
        self.optimizer_state = optimizer_state if optimizer_state is not None else OptimizerState.for_params(params)
        self.max_norm = max_norm
        self._global_step = 0
        self._episodes = 0

        return

    @property
    def params(self) -> HybridNetParams:
        """Returns the live shared parameters

        * Note that this property is not a copy; use `snapshot` from worker threads.

        Returns:
            HybridNetParams: the shared parameters
        """
        return self._params

    @property
    def optimizer_state(self) -> OptimizerState:
        """Returns the shared optimizer state

        Returns:
            OptimizerState: accumulators, learning rate and update counters
        """
        return self._optimizer_state

    @optimizer_state.setter
    def optimizer_state(self, state: OptimizerState) -> None:
        """Set the shared optimizer state

        Args:
            state (OptimizerState): the optimizer state
        """
        self._optimizer_state = state
        pass

    @property
    def global_step(self) -> int:
        """Get the number of environment steps taken by all workers

        Returns:
            int: the global step counter
        """
        return self._global_step

    @property
    def episodes(self) -> int:
        """Get the number of episodes finished by all workers

        Returns:
            int: the episode counter
        """
        return self._episodes

    @property
    def rejected_updates(self) -> int:
        """Get the number of gradient updates rejected as non-finite

        Returns:
            int: the rejected update counter
        """
        return self._optimizer_state.rejected

    def snapshot(self) -> HybridNetParams:
        """Copy the shared parameters under the lock

        Returns:
            HybridNetParams: a consistent copy
        """
        with self._lock:
            return self._params.copy()

    def apply(self, grads: Gradients) -> bool:
        """Apply one gradient batch atomically

        Args:
            grads (Gradients): gradients of every tensor

        Returns:
            bool: False if the update was rejected
        """
        with self._lock:
            return apply_gradients(self._params, self._optimizer_state, grads, self.max_norm)

    def advance(self, steps: int, episodes: int = 0) -> int:
        """Add to the global counters

        Args:
            steps (int): environment steps taken
            episodes (int, optional): episodes finished. Defaults to 0.

        Returns:
            int: the global step after the increment
        """
        with self._lock:
            self._global_step += steps
            self._episodes += episodes
            return self._global_step

    def __str__(self) -> str:

        """String representation of the ParameterStore object

        Returns:
            str: the string representation of the ParameterStore object

        """
        return f"""
        ParameterStore object properties:

        architecture = {self._params.spec.kind}
        parameters = {len(self._params)}
        global step = {self._global_step}
        episodes = {self._episodes}
        updates applied = {self._optimizer_state.updates}
        updates rejected = {self._optimizer_state.rejected}
        learning rate = {self._optimizer_state.learning_rate}

        """

    def __repr__(self) -> str:
        return self.__str__()
