"""Config service tests: paths, proposals, CAS apply, gating, audit."""

import random

import pytest

from hoguard.config_store import (
    AuditAction,
    AuditLog,
    ConfigPatch,
    ConfigPath,
    ConfigService,
    InvalidPatch,
    NotApproved,
    NotPending,
    PatchEntry,
    PathNotFound,
    ProposalStatus,
    StaleValue,
    UnknownProposal,
)
from hoguard.scenario import MISCONFIGURED_A3, reference_scenario
from hoguard.sim import A3Config


@pytest.fixture
def service():
    svc = ConfigService()
    for cell in reference_scenario().cells:
        svc.register_cell(cell.gnb_id, cell.cell_id, MISCONFIGURED_A3)
    return svc


def _patch(*entries):
    return ConfigPatch(entries=tuple(
        PatchEntry(path=ConfigPath.parse(p), expected_old=old, new=new)
        for p, old, new in entries
    ))


def _full_correction_patch():
    entries = []
    for gnb, cell in ((30, 1), (31, 2)):
        prefix = f"gnb/{gnb}/cell/{cell}/a3"
        entries += [
            (f"{prefix}/offset-db", 2.0, 4.0),
            (f"{prefix}/hysteresis-db", 2.0, 4.0),
            (f"{prefix}/ttt-ms", 100, 320),
        ]
    return _patch(*entries)


class TestConfigPath:
    def test_roundtrip(self):
        text = "gnb/30/cell/1/a3/offset-db"
        assert str(ConfigPath.parse(text)) == text

    @pytest.mark.parametrize("bad", [
        "gnb/30/cell/1/a3/tx-power",
        "gnb/30/cell/1/offset-db",
        "gnb/x/cell/1/a3/offset-db",
        "",
        "gnb/30/cell/1/a3/offset-db/extra",
    ])
    def test_parse_rejects(self, bad):
        with pytest.raises(ValueError):
            ConfigPath.parse(bad)

    def test_scope_expands_subtree(self):
        leaves = ConfigPath.parse_scope("gnb/30/cell/1/a3")
        assert leaves == [
            "gnb/30/cell/1/a3/offset-db",
            "gnb/30/cell/1/a3/hysteresis-db",
            "gnb/30/cell/1/a3/ttt-ms",
        ]

    def test_scope_accepts_leaf(self):
        assert ConfigPath.parse_scope("gnb/30/cell/1/a3/ttt-ms") == ["gnb/30/cell/1/a3/ttt-ms"]


class TestGet:
    def test_initial_values_match_misconfiguration(self, service):
        value, version = service.get(ConfigPath.parse("gnb/30/cell/1/a3/offset-db"))
        assert value == 2.0 and version == 0
        value, _ = service.get(ConfigPath.parse("gnb/30/cell/1/a3/ttt-ms"))
        assert value == 100
        value, _ = service.get(ConfigPath.parse("gnb/31/cell/2/a3/hysteresis-db"))
        assert value == 2.0

    def test_unknown_path(self, service):
        with pytest.raises(PathNotFound):
            service.get(ConfigPath.parse("gnb/99/cell/1/a3/offset-db"))

    def test_read_is_audited(self, service):
        service.get(ConfigPath.parse("gnb/30/cell/1/a3/offset-db"))
        actions = [r.action for r in service.history()]
        assert actions == [AuditAction.GET_CONFIG]


class TestPropose:
    def test_full_patch_pending_with_six_entries(self, service):
        proposal = service.propose(_full_correction_patch(), "desensitize", "cycle-1")
        assert proposal.status is ProposalStatus.PENDING
        assert len(proposal.patch.entries) == 6
        assert service.version() == 0

    def test_ttt_not_in_allowed_set(self, service):
        with pytest.raises(InvalidPatch):
            _patch(("gnb/30/cell/1/a3/ttt-ms", 100, 300))

    def test_empty_patch(self):
        with pytest.raises(InvalidPatch):
            ConfigPatch(entries=())

    def test_unresolved_path(self, service):
        patch = _patch(("gnb/99/cell/9/a3/offset-db", 2.0, 4.0))
        with pytest.raises(InvalidPatch):
            service.propose(patch, "r", "c")

    def test_duplicate_paths(self):
        with pytest.raises(InvalidPatch):
            _patch(("gnb/30/cell/1/a3/offset-db", 2.0, 4.0),
                   ("gnb/30/cell/1/a3/offset-db", 2.0, 5.0))


class TestDecide:
    def test_approve(self, service):
        prop = service.propose(_full_correction_patch(), "r", "c")
        assert service.decide(prop.proposal_id, True, "op").status is ProposalStatus.APPROVED

    def test_reject_is_terminal_and_leaves_tree(self, service):
        prop = service.propose(_full_correction_patch(), "r", "c")
        service.decide(prop.proposal_id, False, "op")
        assert service.version() == 0
        with pytest.raises(NotPending):
            service.decide(prop.proposal_id, True, "op")
        with pytest.raises(NotApproved):
            service.apply(prop.proposal_id)

    def test_double_approve(self, service):
        prop = service.propose(_full_correction_patch(), "r", "c")
        service.decide(prop.proposal_id, True, "op")
        with pytest.raises(NotPending):
            service.decide(prop.proposal_id, True, "op")

    def test_unknown_proposal(self, service):
        with pytest.raises(UnknownProposal):
            service.decide("prop-404", True, "op")


class TestApply:
    def test_applies_atomically_with_readback(self, service):
        prop = service.propose(_full_correction_patch(), "r", "c")
        service.decide(prop.proposal_id, True, "op")
        report = service.apply(prop.proposal_id)
        assert report.new_version == 1
        assert service.version() == 1
        for entry in report.entries:
            current, _ = service.get(ConfigPath.parse(entry.path))
            assert entry.readback == entry.new == current
        assert service.a3_config(30, 1) == A3Config(4.0, 4.0, 320)
        assert service.a3_config(31, 2) == A3Config(4.0, 4.0, 320)
        assert prop.status is ProposalStatus.APPLIED

    def test_stale_value_fails_whole_patch(self, service):
        prop = service.propose(
            _patch(("gnb/30/cell/1/a3/offset-db", 3.0, 4.0),  # wrong expected_old
                   ("gnb/30/cell/1/a3/hysteresis-db", 2.0, 4.0)),
            "r", "c")
        service.decide(prop.proposal_id, True, "op")
        with pytest.raises(StaleValue):
            service.apply(prop.proposal_id)
        assert service.version() == 0
        # no entry applied, including the one whose expected_old matched
        assert service.get(ConfigPath.parse("gnb/30/cell/1/a3/hysteresis-db"))[0] == 2.0
        assert prop.status is ProposalStatus.FAILED

    def test_unapproved_apply_rejected(self, service):
        prop = service.propose(_full_correction_patch(), "r", "c")
        with pytest.raises(NotApproved):
            service.apply(prop.proposal_id)
        assert service.version() == 0


class TestAudit:
    def test_fresh_service(self):
        svc = ConfigService()
        assert svc.version() == 0
        assert svc.history() == []

    def test_propose_decide_apply_triplet(self, service):
        prop = service.propose(_full_correction_patch(), "r", "c")
        service.decide(prop.proposal_id, True, "op")
        service.apply(prop.proposal_id)
        actions = [r.action for r in service.history()]
        assert actions == [AuditAction.PROPOSE, AuditAction.DECIDE, AuditAction.APPLY]
        seqs = [r.seq for r in service.history()]
        assert seqs == list(range(1, len(seqs) + 1))

    def test_export_ndjson(self, service):
        service.get(ConfigPath.parse("gnb/30/cell/1/a3/offset-db"))
        lines = service.audit.export_ndjson().splitlines()
        assert len(lines) == 1


class TestGatingFuzz:
    def test_version_only_moves_through_approved_apply(self, service):
        """Random op soup: version must track approved+applied count exactly."""
        rng = random.Random(1337)
        applied = 0
        paths = service.leaf_paths()
        pending: list[str] = []
        for _ in range(400):
            op = rng.choice(["get", "propose", "reject", "apply_unapproved",
                             "approve_apply", "apply_stale"])
            if op == "get":
                service.get(ConfigPath.parse(rng.choice(paths)))
            elif op == "propose":
                path = rng.choice(paths)
                current, _ = service.get(ConfigPath.parse(path))
                new = 320 if path.endswith("ttt-ms") else min(15.0, float(current) + 0.5)
                prop = service.propose(_patch((path, current, new)), "fuzz", "cycle-f")
                pending.append(prop.proposal_id)
            elif op == "reject" and pending:
                service.decide(pending.pop(), False, "fuzz-op")
            elif op == "apply_unapproved" and pending:
                with pytest.raises(NotApproved):
                    service.apply(pending[-1])
            elif op == "approve_apply" and pending:
                pid = pending.pop()
                service.decide(pid, True, "fuzz-op")
                try:
                    service.apply(pid)
                    applied += 1
                except StaleValue:
                    pass  # an earlier apply moved the leaf under this proposal
            elif op == "apply_stale" and pending:
                pid = pending.pop()
                prop = service.get_proposal(pid)
                service.decide(pid, True, "fuzz-op")
                entry = prop.patch.entries[0]
                current, _ = service.get(entry.path)
                if current == entry.expected_old:
                    service.apply(pid)
                    applied += 1
                else:
                    with pytest.raises(StaleValue):
                        service.apply(pid)
            assert service.version() == applied
        seqs = [r.seq for r in service.history()]
        assert seqs == list(range(1, len(seqs) + 1))


class TestImportExport:
    def test_roundtrip(self, service):
        doc = service.export_tree()
        clone = ConfigService.import_tree(doc)
        assert clone.export_tree() == doc
        assert clone.a3_config(30, 1) == service.a3_config(30, 1)

    def test_bad_value_rejected(self, service):
        doc = service.export_tree()
        doc["gnb/30/cell/1/a3/ttt-ms"] = 300
        with pytest.raises(InvalidPatch):
            ConfigService.import_tree(doc)

    def test_incomplete_cell_rejected(self, service):
        doc = {"gnb/30/cell/1/a3/offset-db": 2.0}
        with pytest.raises(InvalidPatch):
            ConfigService.import_tree(doc)
