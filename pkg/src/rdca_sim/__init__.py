"""Deterministic simulator of a cache-resident RDMA receiver datapath."""

from .core import (KIB, MIB, MsgKind, Message, classify, gbps,
                   ConfigError, SimError)
from .cache_pool import BufferHandle, Pool, PoolConfig, Region
from .flow_control import (AdmissionQueues, FlowWindows, Fragment, Qos,
                           ReadRequest, fragment_sizes)
from .recycle import AppRegistry, Pipeline, ProcessingModel, Registries, Slice
from .escape import Action, ActionKind, EscapeConfig, EscapeState, escape_step
from .hostnet import (CompetitorProfile, DcqcnParams, DcqcnSender, Host,
                      NetworkPreset, PRESETS, RnicBufferConfig)
from .sim import (COLUMNS, Engine, Mode, Scenario, SlowAppConfig, Summary,
                  compare, metrics_csv_text, run, sweep)

__version__ = "0.1.0"
