"""Actor and critic networks on torch, in double precision."""

import logging
import math
from pathlib import Path
from typing import Dict, Mapping, NamedTuple, Optional, Tuple, Union

import torch
import torch.nn.functional as F
from torch import nn

from dwrfoil.exceptions import DomainError, StructureError, UsageError

logger = logging.getLogger(__name__)

DTYPE = torch.float64
CHECKPOINT_VERSION = 1
ACTOR_HIDDEN = 256
CRITIC_HIDDEN = 128
CRITIC_DENSE = 256
N_PARAMS = 3

PathLike = Union[str, Path]


def softsign(x: torch.Tensor) -> torch.Tensor:
    """``x / (1 + |x|)``.

    Examples:
        >>> softsign(torch.tensor([0.0, 1.0, -3.0])).tolist()
        [0.0, 0.5, -0.75]
    """
    return F.softsign(x)


def selu(x: torch.Tensor) -> torch.Tensor:
    return F.selu(x)


def dense(n_in: int, n_out: int) -> nn.Linear:
    return nn.Linear(n_in, n_out, dtype=DTYPE)


class Network(nn.Module):
    """Module that remembers its last inputs and output for :func:`backward`."""

    def __init__(self) -> None:
        super().__init__()
        self.last_inputs: Tuple[torch.Tensor, ...] = ()
        self.last_output: Optional[torch.Tensor] = None

    def evaluate(self, *inputs: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def forward(self, *inputs: torch.Tensor) -> torch.Tensor:  # pylint: disable=arguments-differ
        output = self.evaluate(*inputs)
        self.last_inputs = inputs
        self.last_output = output
        return output


class Sequential(Network):
    """Plain stack of layers, for small test networks."""

    def __init__(self, *layers: nn.Module) -> None:
        super().__init__()
        self.layers = nn.ModuleList(layers)

    def evaluate(self, *inputs: torch.Tensor) -> torch.Tensor:
        (x,) = inputs
        for layer in self.layers:
            x = layer(x)
        return x


class Residual(nn.Module):
    """``x + body(x)``."""

    def __init__(self, body: nn.Module) -> None:
        super().__init__()
        self.body = body

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # pylint: disable=arguments-differ
        return x + self.body(x)


def forward(network: Network, *inputs: torch.Tensor) -> torch.Tensor:
    return network(*inputs)


class Gradients(NamedTuple):
    parameters: Dict[str, torch.Tensor]
    inputs: Tuple[Optional[torch.Tensor], ...]


def backward(network: Network, grad_output: torch.Tensor) -> Gradients:
    """Reverse-mode gradients of the last recorded output against ``grad_output``.

    Input gradients are returned for recorded inputs that require grad, ``None`` otherwise.

    Raises:
        UsageError: Nothing has been recorded yet.
        StructureError: ``grad_output`` does not match the recorded output.
    """
    output = network.last_output
    if output is None:
        raise UsageError(f"backward called on {type(network).__name__} before forward")
    grad_output = torch.as_tensor(grad_output, dtype=output.dtype)
    if grad_output.shape != output.shape:
        raise StructureError(
            f"output gradient shape {tuple(grad_output.shape)} != output shape {tuple(output.shape)}"
        )
    named = [(name, p) for name, p in network.named_parameters() if p.requires_grad]
    tracked = [x for x in network.last_inputs if x.requires_grad]
    grads = torch.autograd.grad(
        output,
        [p for _, p in named] + tracked,
        grad_outputs=grad_output,
        retain_graph=True,
        allow_unused=True,
    )
    parameters = {
        name: torch.zeros_like(p) if g is None else g for (name, p), g in zip(named, grads[: len(named)])
    }
    tracked_grads = iter(grads[len(named) :])
    inputs = tuple(next(tracked_grads) if x.requires_grad else None for x in network.last_inputs)
    return Gradients(parameters, inputs)


class AttentionBlock(nn.Module):
    """Scaled dot-product attention with learned query, key and value projections.

    In ``"self"`` mode keys and values are the queries; ``"cross"`` mode attends a
    separate key/value stream.
    """

    def __init__(self, dim: int, mode: str = "self") -> None:
        super().__init__()
        if mode not in ("self", "cross"):
            raise DomainError(f"attention mode must be 'self' or 'cross', got '{mode}'")
        self.dim = dim
        self.mode = mode
        self.query = dense(dim, dim)
        self.key = dense(dim, dim)
        self.value = dense(dim, dim)
        self.last_weights: Optional[torch.Tensor] = None

    def forward(  # pylint: disable=arguments-differ
        self, queries: torch.Tensor, keys: Optional[torch.Tensor] = None, values: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        if self.mode == "self":
            if keys is not None or values is not None:
                raise StructureError("self-attention takes a single token stream")
            keys = values = queries
        elif keys is None:
            raise StructureError("cross-attention needs a key/value stream")
        elif values is None:
            values = keys
        for name, tokens in (("queries", queries), ("keys", keys), ("values", values)):
            if tokens.shape[-1] != self.dim:
                raise StructureError(f"{name} have width {tokens.shape[-1]}, expected {self.dim}")
        if keys.shape[-2] != values.shape[-2]:
            raise StructureError("keys and values must have the same token count")
        scores = self.query(queries) @ self.key(keys).transpose(-2, -1) / math.sqrt(self.dim)
        weights = torch.softmax(scores, dim=-1)
        self.last_weights = weights.detach()
        return weights @ self.value(values)


def attention(
    block: AttentionBlock,
    queries: torch.Tensor,
    keys: Optional[torch.Tensor] = None,
    values: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    return block(queries, keys, values)


def state_width(n_control: int) -> int:
    """Two curves of ``n_control`` planar control points."""
    return 4 * n_control


class Actor(Network):
    """Control points to action parameters and action-type probabilities.

    Output columns are ``x_target`` in (0, 1), the two displacements in
    ``(-max_step, max_step)``, then ``n_types`` softmax probabilities.
    """

    def __init__(
        self, n_control: int, max_step: float, hidden: int = ACTOR_HIDDEN, n_types: int = 1
    ) -> None:
        super().__init__()
        self.n_control = n_control
        self.max_step = max_step
        self.n_types = n_types
        self.input_layer = dense(state_width(n_control), hidden)
        self.hidden_layer = Residual(nn.Sequential(dense(hidden, hidden), nn.Softsign()))
        self.params_head = dense(hidden, N_PARAMS)
        self.type_head = dense(hidden, n_types)

    def evaluate(self, *inputs: torch.Tensor) -> torch.Tensor:
        (state,) = inputs
        if state.shape[-1] != state_width(self.n_control):
            raise StructureError(
                f"actor expects {state_width(self.n_control)} state features, got {state.shape[-1]}"
            )
        first = softsign(self.input_layer(state))
        second = self.hidden_layer(first)
        raw = softsign(self.params_head(second))
        x_target = 0.5 * (raw[..., :1] + 1.0)
        displacement = self.max_step * raw[..., 1:]
        probabilities = torch.softmax(self.type_head(second), dim=-1)
        return torch.cat([x_target, displacement, probabilities], dim=-1)


class Critic(Network):
    """Q(s, a) with attention between control-point tokens and action tokens.

    Each control point is a token; the action contributes a parameter token and an
    action-type token. Self-attention mixes the control points, cross-attention
    lets them attend to the action, and the mean token feeds two SELU layers.
    """

    def __init__(
        self,
        n_control: int,
        n_types: int = 1,
        hidden: int = CRITIC_HIDDEN,
        width: int = CRITIC_DENSE,
    ) -> None:
        super().__init__()
        self.n_control = n_control
        self.n_types = n_types
        self.point_embedding = dense(2, hidden)
        self.position = nn.Parameter(0.02 * torch.randn(2 * n_control, hidden, dtype=DTYPE))
        self.params_embedding = dense(N_PARAMS, hidden)
        self.type_embedding = dense(n_types, hidden)
        self.self_attention = AttentionBlock(hidden, "self")
        self.cross_attention = AttentionBlock(hidden, "cross")
        self.first = dense(hidden, width)
        self.second = dense(width, width)
        self.out = dense(width, 1)

    def evaluate(self, *inputs: torch.Tensor) -> torch.Tensor:
        state, action = inputs
        if state.shape[-1] != state_width(self.n_control):
            raise StructureError(
                f"critic expects {state_width(self.n_control)} state features, got {state.shape[-1]}"
            )
        if action.shape[-1] != N_PARAMS + self.n_types:
            raise StructureError(
                f"critic expects {N_PARAMS + self.n_types} action features, got {action.shape[-1]}"
            )
        points = state.reshape(*state.shape[:-1], 2 * self.n_control, 2)
        tokens = self.point_embedding(points) + self.position
        tokens = tokens + self.self_attention(tokens)
        action_tokens = torch.stack(
            [self.params_embedding(action[..., :N_PARAMS]), self.type_embedding(action[..., N_PARAMS:])],
            dim=-2,
        )
        tokens = tokens + self.cross_attention(tokens, action_tokens)
        hidden = selu(self.first(tokens.mean(dim=-2)))
        hidden = selu(self.second(hidden))
        return self.out(hidden)


def make_optimizer(network: nn.Module, lr: float) -> torch.optim.Adam:
    return torch.optim.Adam(network.parameters(), lr=lr)


def optimizer_step(
    network: nn.Module, optimizer: torch.optim.Optimizer, gradients: Mapping[str, torch.Tensor]
) -> None:
    """Install ``gradients`` (by parameter name) and take one optimizer step."""
    for name, parameter in network.named_parameters():
        if name not in gradients:
            raise StructureError(f"no gradient supplied for parameter '{name}'")
        gradient = gradients[name]
        if gradient.shape != parameter.shape:
            raise StructureError(
                f"gradient for '{name}' has shape {tuple(gradient.shape)}, expected {tuple(parameter.shape)}"
            )
        parameter.grad = gradient.detach().clone()
    optimizer.step()


def soft_update(target: nn.Module, online: nn.Module, tau: float) -> None:
    """``target <- tau * target + (1 - tau) * online``, in place."""
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau!r}")
    with torch.no_grad():
        for target_param, online_param in zip(target.parameters(), online.parameters()):
            target_param.mul_(tau).add_(online_param, alpha=1.0 - tau)


def save_checkpoint(
    path: PathLike,
    networks: Mapping[str, nn.Module],
    optimizers: Optional[Mapping[str, torch.optim.Optimizer]] = None,
) -> None:
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "networks": {name: net.state_dict() for name, net in networks.items()},
            "optimizers": {name: opt.state_dict() for name, opt in (optimizers or {}).items()},
        },
        path,
    )


def load_checkpoint(
    path: PathLike,
    networks: Mapping[str, nn.Module],
    optimizers: Optional[Mapping[str, torch.optim.Optimizer]] = None,
) -> None:
    """Restore networks (and optimizers) saved by :func:`save_checkpoint`, in place."""
    payload = torch.load(path, weights_only=True)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise StructureError(f"{path}: checkpoint version {version!r}, expected {CHECKPOINT_VERSION}")
    for name, network in networks.items():
        if name not in payload["networks"]:
            raise StructureError(f"{path}: no network '{name}' in checkpoint")
        network.load_state_dict(payload["networks"][name])
    for name, optimizer in (optimizers or {}).items():
        if name not in payload["optimizers"]:
            raise StructureError(f"{path}: no optimizer '{name}' in checkpoint")
        optimizer.load_state_dict(payload["optimizers"][name])
