"""Stateful L2CAP signaling fuzzer with a simulated target.

The pieces compose bottom-up: codec (wire format), states (transition
table), mutation (packet generation), simulator (the target), transport
(framing and delivery), session (state guiding), campaign (the fuzzing
loop and detector), metrics/report (numbers and figures), profiles
(configuration), cli (entry points).
"""

from .campaign import (
    CampaignConfig,
    CampaignResult,
    NoReachablePort,
    ScanReport,
    Severity,
    Verdict,
    Vulnerability,
    detect,
    load_log,
    replay_row,
    run_campaign,
    scan_target,
)
from .codec import (
    CHANNEL_REFERENCE,
    CID_ENDPOINT_FIELDS,
    DYNAMIC_CID_MAX,
    DYNAMIC_CID_MIN,
    FIELD_CLASSES,
    SCHEMAS,
    SIGNALING_CID,
    CodecError,
    CommandKind,
    FieldClass,
    L2capPacket,
    classify_field,
    decode,
    encode,
    from_hexdump,
    hexdump,
)
from .metrics import CampaignMetrics, mp_ratio, mutation_efficiency, pr_ratio
from .mutation import (
    IdCounter,
    MutationConfig,
    MutationRecord,
    baseline_mutate,
    generate_batch,
    mutate_command,
)
from .profiles import ConfigError, LoadedConfig, builtin_names, builtin_profile, load_config
from .session import FuzzSession, GuideResult
from .simulator import (
    BugProfile,
    DeviceProfile,
    FieldCondition,
    L2capDevice,
    Reaction,
    ScanInfo,
    ServicePort,
    Strictness,
)
from .states import (
    JOB_ORDER,
    PEER_INITIATED,
    Job,
    L2capState,
    TransitionRule,
    find_path,
    job_of,
    reachable_states,
    step,
    transition_table,
    valid_commands,
)
from .transport import (
    HciTransport,
    Outcome,
    SimTransport,
    Transport,
    TransportUnavailable,
    UdpLoopbackTransport,
)

__version__ = "0.1.0"
