"""Generate the shipped 317-parameter Fabric schema and its templates.

The parameter list is a stand-in assembled from publicly documented
core.yaml / orderer.yaml / configtx.yaml keys for a network of four peer
organizations (one peer each) and one ordering organization.  Bounds are
plausible operating ranges, not measured ones.

    python tools/make_default_schema.py
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "hlftune" / "data"

PEERS = ["peer0.org1", "peer0.org2", "peer0.org3", "peer0.org4"]


def i(key, lo, hi, default, scale="linear", unit=""):
    return dict(key=key, kind="numeric-int", lo=lo, hi=hi, default=default, scale=scale, unit=unit)


def f(key, lo, hi, default, scale="linear", unit=""):
    return dict(key=key, kind="numeric-float", lo=lo, hi=hi, default=default, scale=scale, unit=unit)


def b(key, default):
    return dict(key=key, kind="boolean", default=default, unit="")


def c(key, choices, default):
    return dict(key=key, kind="categorical", choices=choices, default=default, unit="")


LOG_LEVELS = ["debug", "info", "warning", "error"]

CORE = [
    i("peer.keepalive.interval", 10, 7200, 7200, "log", "s"),
    i("peer.keepalive.timeout", 1, 120, 20, "log", "s"),
    i("peer.keepalive.minInterval", 5, 600, 60, "log", "s"),
    i("peer.keepalive.client.interval", 10, 7200, 60, "log", "s"),
    i("peer.keepalive.client.timeout", 1, 120, 20, "log", "s"),
    i("peer.keepalive.deliveryClient.interval", 10, 7200, 60, "log", "s"),
    i("peer.keepalive.deliveryClient.timeout", 1, 120, 20, "log", "s"),
    b("peer.gossip.useLeaderElection", False),
    b("peer.gossip.orgLeader", True),
    i("peer.gossip.membershipTrackerInterval", 1, 60, 5, "linear", "s"),
    i("peer.gossip.maxBlockCountToStore", 10, 1000, 10, "log"),
    i("peer.gossip.maxPropagationBurstLatency", 1, 100, 10, "log", "ms"),
    i("peer.gossip.maxPropagationBurstSize", 1, 100, 10),
    i("peer.gossip.propagateIterations", 1, 5, 1),
    i("peer.gossip.propagatePeerNum", 1, 10, 3),
    i("peer.gossip.pullInterval", 1, 30, 4, "linear", "s"),
    i("peer.gossip.pullPeerNum", 1, 10, 3),
    i("peer.gossip.requestStateInfoInterval", 1, 30, 4, "linear", "s"),
    i("peer.gossip.publishStateInfoInterval", 1, 30, 4, "linear", "s"),
    i("peer.gossip.publishCertPeriod", 1, 60, 10, "linear", "s"),
    i("peer.gossip.dialTimeout", 1, 30, 3, "linear", "s"),
    i("peer.gossip.connTimeout", 1, 10, 2, "linear", "s"),
    i("peer.gossip.recvBuffSize", 5, 200, 20, "log"),
    i("peer.gossip.sendBuffSize", 5, 1000, 200, "log"),
    i("peer.gossip.digestWaitTime", 100, 5000, 1000, "log", "ms"),
    i("peer.gossip.requestWaitTime", 100, 5000, 1500, "log", "ms"),
    i("peer.gossip.responseWaitTime", 1, 10, 2, "linear", "s"),
    i("peer.gossip.aliveTimeInterval", 1, 30, 5, "linear", "s"),
    i("peer.gossip.aliveExpirationTimeout", 5, 120, 25, "log", "s"),
    i("peer.gossip.reconnectInterval", 5, 120, 25, "log", "s"),
    i("peer.gossip.election.startupGracePeriod", 5, 60, 15, "linear", "s"),
    i("peer.gossip.election.membershipSampleInterval", 1, 10, 1, "linear", "s"),
    i("peer.gossip.election.leaderAliveThreshold", 2, 60, 10, "linear", "s"),
    i("peer.gossip.election.leaderElectionDuration", 1, 30, 5, "linear", "s"),
    i("peer.gossip.pvtData.pullRetryThreshold", 10, 300, 60, "log", "s"),
    i("peer.gossip.pvtData.transientstoreMaxBlockRetention", 100, 5000, 1000, "log"),
    i("peer.gossip.pvtData.pushAckTimeout", 1, 10, 3, "linear", "s"),
    i("peer.gossip.pvtData.btlPullMargin", 1, 50, 10),
    i("peer.gossip.pvtData.reconcileBatchSize", 1, 100, 10, "log"),
    i("peer.gossip.pvtData.reconcileSleepInterval", 10, 300, 60, "log", "s"),
    b("peer.gossip.pvtData.reconciliationEnabled", True),
    b("peer.gossip.state.enabled", False),
    i("peer.gossip.state.checkInterval", 1, 30, 10, "linear", "s"),
    i("peer.gossip.state.responseTimeout", 1, 10, 3, "linear", "s"),
    i("peer.gossip.state.batchSize", 1, 50, 10),
    i("peer.gossip.state.blockBufferSize", 20, 500, 20, "log"),
    i("peer.gossip.state.maxRetries", 1, 10, 3),
    i("peer.deliveryclient.reconnectTotalTimeThreshold", 60, 3600, 3600, "log", "s"),
    i("peer.deliveryclient.connTimeout", 1, 30, 3, "linear", "s"),
    i("peer.limits.concurrency.endorserService", 100, 10000, 2500, "log"),
    i("peer.limits.concurrency.deliverService", 100, 10000, 2500, "log"),
    i("peer.limits.concurrency.gatewayService", 50, 5000, 500, "log"),
    i("peer.gateway.endorsementTimeout", 5, 120, 30, "log", "s"),
    i("peer.maxRecvMsgSize", 4194304, 209715200, 104857600, "log"),
    i("peer.validatorPoolSize", 1, 64, 4, "log"),
    c("ledger.state.stateDatabase", ["goleveldb", "CouchDB"], "goleveldb"),
    i("ledger.state.totalQueryLimit", 1000, 100000, 100000, "log"),
    i("ledger.state.couchDBConfig.requestTimeout", 5, 120, 35, "linear", "s"),
    i("ledger.state.couchDBConfig.maxBatchUpdateSize", 100, 5000, 1000, "log"),
    b("ledger.history.enableHistoryDatabase", True),
]

ORDERER = [
    i("General.Keepalive.ServerMinInterval", 5, 600, 60, "log", "s"),
    i("General.Keepalive.ServerInterval", 10, 7200, 7200, "log", "s"),
    i("General.Keepalive.ServerTimeout", 1, 120, 20, "log", "s"),
    i("General.MaxRecvMsgSize", 4194304, 209715200, 104857600, "log"),
    i("General.MaxSendMsgSize", 4194304, 209715200, 104857600, "log"),
    i("General.Cluster.SendBufferSize", 1, 100, 10, "log"),
    i("General.Cluster.DialTimeout", 1, 60, 5, "log", "s"),
    i("General.Cluster.RPCTimeout", 1, 60, 7, "log", "s"),
    i("General.Cluster.ReplicationBufferSize", 1048576, 104857600, 20971520, "log"),
    i("General.Cluster.ReplicationPullTimeout", 1, 60, 5, "log", "s"),
    i("General.Cluster.ReplicationRetryTimeout", 1, 60, 5, "log", "s"),
    i("General.Cluster.ReplicationBackgroundRefreshInterval", 60, 3600, 300, "log", "s"),
    i("General.Cluster.ReplicationMaxRetries", 1, 50, 12, "log"),
    i("General.Cluster.CertExpirationWarningThreshold", 24, 720, 168, "log", "h"),
    i("General.Authentication.TimeWindow", 1, 60, 15, "linear", "m"),
    c("General.BootstrapMethod", ["file", "none"], "file"),
    b("General.TLS.Enabled", True),
    b("General.TLS.ClientAuthRequired", False),
    c("General.Profile.Enabled", ["false", "true"], "false"),
    i("FileLedger.Prefix.MaxOpenFiles", 64, 4096, 512, "log"),
    i("Consensus.SnapshotIntervalSize", 1048576, 104857600, 16777216, "log"),
    i("Consensus.EvictionSuspicion", 60, 3600, 600, "log", "s"),
    i("Consensus.TickIntervalOverride", 100, 2000, 500, "log", "ms"),
    b("Operations.TLS.ClientAuthRequired", False),
    c("Metrics.Provider", ["disabled", "prometheus", "statsd"], "disabled"),
    i("Metrics.Statsd.WriteInterval", 1, 120, 30, "log", "s"),
    b("Admin.TLS.Enabled", True),
    i("ChannelParticipation.MaxRequestBodySize", 1048576, 104857600, 1048576, "log"),
    c("General.LogLevel", LOG_LEVELS, "info"),
    i("Debug.BroadcastTraceDir.Depth", 0, 8, 0),
    i("Kafka.Retry.ShortInterval", 1, 60, 5, "log", "s"),
    i("Kafka.Retry.ShortTotal", 60, 1800, 600, "log", "s"),
    i("Kafka.Retry.LongInterval", 60, 1800, 300, "log", "s"),
    i("Kafka.Retry.LongTotal", 3600, 86400, 43200, "log", "s"),
    i("Kafka.Retry.NetworkTimeouts.DialTimeout", 1, 60, 10, "log", "s"),
    i("Kafka.Retry.NetworkTimeouts.ReadTimeout", 1, 60, 10, "log", "s"),
    i("Kafka.Retry.NetworkTimeouts.WriteTimeout", 1, 60, 10, "log", "s"),
    i("Kafka.Retry.Metadata.RetryMax", 1, 10, 3),
    i("Kafka.Retry.Metadata.RetryBackoff", 50, 2000, 250, "log", "ms"),
    i("Kafka.Retry.Producer.RetryMax", 1, 10, 3),
    i("Kafka.Retry.Producer.RetryBackoff", 10, 1000, 100, "log", "ms"),
    i("Kafka.Retry.Consumer.RetryBackoff", 500, 10000, 2000, "log", "ms"),
    b("Kafka.Verbose", False),
    b("Kafka.TLS.Enabled", False),
    b("Kafka.SASLPlain.Enabled", False),
    c("Kafka.Version", ["0.10.2.0", "1.0.0", "2.0.0"], "0.10.2.0"),
    f("Operations.MetricsSampleRate", 0.01, 1.0, 1.0, "log"),
    f("General.Cluster.ReplicationBatchFillRatio", 0.1, 1.0, 0.8),
    b("General.Cluster.TLSHandshakeTimeShift", False),
    i("General.Cluster.TLSHandshakeTimeShiftSeconds", 0, 3600, 0),
    b("General.LocalMSPDir.Strict", True),
    i("General.Cluster.MaxConcurrentStreams", 1, 256, 64, "log"),
]

CONFIGTX = [
    i("Orderer.BatchTimeout", 100, 10000, 2000, "log", "ms"),
    i("Orderer.BatchSize.MaxMessageCount", 1, 10000, 500, "log"),
    i("Orderer.BatchSize.AbsoluteMaxBytes", 1048576, 104857600, 103809024, "log"),
    i("Orderer.BatchSize.PreferredMaxBytes", 32768, 4194304, 524288, "log"),
    i("Orderer.MaxChannels", 0, 1000, 0),
    c("Orderer.OrdererType", ["etcdraft", "BFT"], "etcdraft"),
    i("Orderer.EtcdRaft.Options.TickInterval", 100, 2000, 500, "log", "ms"),
    i("Orderer.EtcdRaft.Options.ElectionTick", 2, 50, 10, "log"),
    i("Orderer.EtcdRaft.Options.HeartbeatTick", 1, 10, 1),
    i("Orderer.EtcdRaft.Options.MaxInflightBlocks", 1, 50, 5, "log"),
    i("Orderer.EtcdRaft.Options.SnapshotIntervalSize", 1048576, 104857600, 16777216, "log"),
    c("Application.Policies.Endorsement.Rule", ["MAJORITY Endorsement", "ANY Endorsement", "ALL Endorsement"], "MAJORITY Endorsement"),
    c("Application.Policies.LifecycleEndorsement.Rule", ["MAJORITY Endorsement", "ANY Endorsement"], "MAJORITY Endorsement"),
    c("Application.Capabilities.Version", ["V2_0", "V2_5"], "V2_5"),
    c("Channel.Capabilities.Version", ["V2_0", "V3_0"], "V2_0"),
    c("Orderer.Capabilities.Version", ["V1_4_2", "V2_0"], "V2_0"),
    c("Channel.HashingAlgorithm", ["SHA256", "SHA3_256"], "SHA256"),
    c("Channel.BlockDataHashingStructure.Width", ["4294967295", "65535"], "4294967295"),
    i("Orderer.SmartBFT.RequestBatchMaxCount", 10, 5000, 100, "log"),
    i("Orderer.SmartBFT.RequestBatchMaxBytes", 1048576, 104857600, 10485760, "log"),
    i("Orderer.SmartBFT.RequestBatchMaxInterval", 10, 2000, 50, "log", "ms"),
    i("Orderer.SmartBFT.IncomingMessageBufferSize", 10, 1000, 200, "log"),
    i("Orderer.SmartBFT.RequestPoolSize", 100, 10000, 400, "log"),
    i("Orderer.SmartBFT.LeaderHeartbeatTimeout", 5, 120, 60, "log", "s"),
    b("Orderer.SmartBFT.SyncOnStart", False),
]


def _param(spec, name, path):
    out = {"name": name, "kind": spec["kind"]}
    if spec["kind"].startswith("numeric"):
        out.update(lo=spec["lo"], hi=spec["hi"], scale=spec["scale"])
    elif spec["kind"] == "categorical":
        out["choices"] = spec["choices"]
    out["default"] = spec["default"]
    out["target_path"] = path
    return out


def _render_tree(entries):
    """entries: list of (dotted key, placeholder path, unit). Emits nested YAML."""
    lines = []
    prev: list[str] = []
    for key, path, unit in sorted(entries):
        parts = key.split(".")
        common = 0
        while common < min(len(prev), len(parts) - 1) and prev[common] == parts[common]:
            common += 1
        for depth in range(common, len(parts) - 1):
            lines.append("  " * depth + parts[depth] + ":")
        lines.append("  " * (len(parts) - 1) + f"{parts[-1]}: {{{{{path}}}}}{unit}")
        prev = parts[:-1]
    return "\n".join(lines) + "\n"


def main():
    params = []
    templates = {}
    for peer in PEERS:
        entries = []
        for spec in CORE:
            name = f"{peer}/{spec['key']}"
            path = f"core.{peer.replace('.', '_')}.{spec['key']}"
            params.append(_param(spec, name, path))
            entries.append((spec["key"], path, spec["unit"]))
        templates[f"core-{peer}.yaml"] = f"# core.yaml overrides for {peer}\n" + _render_tree(entries)
    entries = []
    for spec in ORDERER:
        name = f"orderer/{spec['key']}"
        path = f"orderer.{spec['key']}"
        params.append(_param(spec, name, path))
        entries.append((spec["key"], path, spec["unit"]))
    templates["orderer.yaml"] = "# orderer.yaml overrides\n" + _render_tree(entries)
    entries = []
    for spec in CONFIGTX:
        name = f"channel/{spec['key']}"
        path = f"configtx.{spec['key']}"
        params.append(_param(spec, name, path))
        entries.append((spec["key"], path, spec["unit"]))
    templates["configtx.yaml"] = "# channel configuration (configtx.yaml profile section)\n" + _render_tree(entries)

    assert len(params) == 317, len(params)
    constraints = [
        {"kind": "less-equal", "lhs": "channel/Orderer.BatchSize.PreferredMaxBytes",
         "rhs": "channel/Orderer.BatchSize.AbsoluteMaxBytes"},
        {"kind": "implies",
         "if": ["peer0.org1/ledger.state.stateDatabase", "==", "CouchDB"],
         "then": ["peer0.org1/ledger.state.couchDBConfig.requestTimeout", ">=", 10]},
        {"kind": "forbidden-combo", "values": {
            "peer0.org2/peer.gossip.useLeaderElection": True,
            "peer0.org2/peer.gossip.orgLeader": True,
            "peer0.org2/peer.gossip.state.enabled": True}},
    ]
    schema = {"version": "fabric-2.5-stand-in-1", "params": params, "constraints": constraints}
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "fabric_schema.json").write_text(json.dumps(schema, indent=1) + "\n")
    tdir = OUT / "templates"
    tdir.mkdir(exist_ok=True)
    for name, text in templates.items():
        (tdir / f"{name}.tmpl").write_text(text)
    print(f"wrote {len(params)} params, {len(templates)} templates")


if __name__ == "__main__":
    main()
