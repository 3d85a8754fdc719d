"""Deterministic synthetic guest machine.

Byte-addressable physical memory, a paged kernel virtual address space with
a randomized base, a seeded syscall workload, and a virtual clock. The whole
event trace is a pure function of (config, seed, sequence of external calls).
"""

from __future__ import annotations

import bisect
import itertools
import random
from dataclasses import dataclass

from .config import GuestConfig, ProcessSpec
from .errors import (
    BoundsError,
    ConfigurationError,
    GuestCrashedError,
    TranslationFault,
)
from .resources import SimFilesystem, SimProcessTable, SimRegistry

# Synchronization cell convention: a 2-byte word at the base of physical
# frame 0, left uninitialized (zero) by early boot.
SPINLOCK_PADDR = 0x0
SPINLOCK_SIZE = 2

# Virtual window where kernel allocations get mapped, distinct from the
# image window so the two never collide.
ALLOC_SPACE_BASE = 0xFFFF_E000_0000_0000

CRASH_BUG_CHECK = "bug_check"

# Cached inventory of reachable network shares, written at boot the way a
# file browser's history would be; discovery profiles can read it offline.
SHARE_CACHE_PATH = "C:\\ProgramData\\shares.lst"


@dataclass(slots=True)
class SyscallEvent:
    time: float
    pid: int
    syscall: str
    status: str = "ok"
    retval: int | None = None


class CodeBinding:
    """Behavioral semantics attached to a kernel function's bytes."""

    kind = "original"

    def on_execute(self, guest: "GuestMachine", event: SyscallEvent) -> None:
        pass


class TornCode(CodeBinding):
    """Half-written code: executing it raises a guest bug check."""

    kind = "torn"

    def __init__(self, reason: str = CRASH_BUG_CHECK):
        self.reason = reason

    def on_execute(self, guest: "GuestMachine", event: SyscallEvent) -> None:
        event.status = CRASH_BUG_CHECK
        guest.crash(self.reason)


class ProcessActivity:
    """Workload generator state for one simulated process."""

    def __init__(self, spec: ProcessSpec):
        self.spec = spec
        self.pid = spec.pid
        self.is_system_process = spec.is_system_process
        names = sorted(spec.targets)
        self._names = names
        cumulative = list(itertools.accumulate(spec.targets[n] for n in names))
        self._cumulative = cumulative

    def rate_at(self, t: float) -> float:
        return self.spec.rate_at(t)

    def draw_target(self, rng: random.Random) -> str:
        if not self._names:
            return ""
        idx = bisect.bisect_left(self._cumulative, rng.random() * self._cumulative[-1])
        return self._names[min(idx, len(self._names) - 1)]


@dataclass
class Allocation:
    label: str
    vaddr: int
    paddr: int
    size: int


class GuestMachine:
    def __init__(self, config: GuestConfig, seed: int):
        config.validate()
        self.config = config
        self.seed = seed
        self.page_size = config.page_size
        self.frame_count = config.frame_count
        self.phys_mem = bytearray(config.frame_count * config.page_size)
        self.kernel_image = config.kernel_image
        self.rng = random.Random(seed)
        self.clock = 0.0
        self.crashed = False
        self.crash_reason: str | None = None
        self.processes = [ProcessActivity(p) for p in config.processes]
        self.bindings: dict[str, CodeBinding] = {}
        self.allocations: list[Allocation] = []
        self.agent_entry: int | None = None  # paddr of a spawned agent thread
        self.injection_count = 0
        self.trace_log: list = []  # ActionTrace entries, appended by the agent
        self.av = None  # installed security product model, if any

        self.filesystem = SimFilesystem(config.filesystem)
        self.registry = SimRegistry(config.registry)
        self.process_table = SimProcessTable(config.process_list)
        self.network = config.network
        self._write_share_cache()

        # KASLR analog: page-aligned base drawn uniformly from the window.
        self.kernel_base = (
            config.kaslr_base + self.rng.randrange(config.kaslr_pages) * self.page_size
        )

        image_pages = -(-self.kernel_image.span() // self.page_size)
        frames = list(range(1, self.frame_count))
        self.rng.shuffle(frames)
        base_page = self.kernel_base // self.page_size
        self.page_table: dict[int, int] = {
            base_page + i: frames[i] for i in range(image_pages)
        }
        self._used_frames = set(self.page_table.values()) | {0}
        self._alloc_cursor = ALLOC_SPACE_BASE

        for fn in self.kernel_image.functions:
            self.write_virt(self.kernel_base + fn.rel_offset, self.kernel_image.body_bytes(fn.name))

        self.pristine_mem = bytes(self.phys_mem)

    def _write_share_cache(self) -> None:
        if self.filesystem.exists(SHARE_CACHE_PATH):
            return
        enabled = {name.lower() for name in self.network.smb_enabled}
        lines = [
            f"\\\\{host.name}\\{share}"
            for host in self.network.hosts
            if host.name.lower() in enabled
            for share in host.shares
        ]
        if lines:
            self.filesystem.write(SHARE_CACHE_PATH, ("\n".join(lines) + "\n").encode())

    # -- address translation and physical access ---------------------------

    def translate(self, vaddr: int) -> int:
        page, offset = divmod(vaddr, self.page_size)
        frame = self.page_table.get(page)
        if frame is None:
            raise TranslationFault(f"unmapped guest-virtual address {vaddr:#x}")
        return frame * self.page_size + offset

    def read_phys(self, paddr: int, length: int) -> bytes:
        if paddr < 0 or length < 0 or paddr + length > len(self.phys_mem):
            raise BoundsError(f"physical read [{paddr:#x}, +{length}) out of range")
        return bytes(self.phys_mem[paddr:paddr + length])

    def write_phys(self, paddr: int, data: bytes) -> None:
        # Hypervisor privilege: page permissions do not apply, and a raw
        # write can never crash the guest by itself.
        if paddr < 0 or paddr + len(data) > len(self.phys_mem):
            raise BoundsError(f"physical write [{paddr:#x}, +{len(data)}) out of range")
        self.phys_mem[paddr:paddr + len(data)] = data

    def read_virt(self, vaddr: int, length: int) -> bytes:
        out = bytearray()
        while length > 0:
            chunk = min(length, self.page_size - vaddr % self.page_size)
            out.extend(self.read_phys(self.translate(vaddr), chunk))
            vaddr += chunk
            length -= chunk
        return bytes(out)

    def write_virt(self, vaddr: int, data: bytes) -> None:
        offset = 0
        while offset < len(data):
            chunk = min(len(data) - offset, self.page_size - (vaddr + offset) % self.page_size)
            self.write_phys(self.translate(vaddr + offset), data[offset:offset + chunk])
            offset += chunk

    # -- spinlock cell ------------------------------------------------------

    def read_spinlock(self) -> int:
        return int.from_bytes(self.read_phys(SPINLOCK_PADDR, SPINLOCK_SIZE), "little")

    def exchange_spinlock(self, value: int) -> int:
        """Atomic exchange on the synchronization cell; returns the old value."""
        old = self.read_spinlock()
        self.write_phys(SPINLOCK_PADDR, value.to_bytes(SPINLOCK_SIZE, "little"))
        return old

    # -- kernel-side allocation ---------------------------------------------

    def allocate_contiguous(self, size: int, label: str = "alloc") -> Allocation:
        """Reserve physically contiguous, page-aligned frames (guest-side API)."""
        if size <= 0 or size % self.page_size:
            raise ConfigurationError("allocation size must be a positive page multiple")
        need = size // self.page_size
        run_start, run_len = None, 0
        for frame in range(1, self.frame_count):
            if frame in self._used_frames:
                run_start, run_len = None, 0
                continue
            if run_start is None:
                run_start = frame
            run_len += 1
            if run_len == need:
                break
        else:
            raise ConfigurationError(f"no contiguous run of {need} free frames")
        vaddr = self._alloc_cursor
        self._alloc_cursor += need * self.page_size
        for i in range(need):
            frame = run_start + i
            self._used_frames.add(frame)
            self.page_table[vaddr // self.page_size + i] = frame
        alloc = Allocation(label, vaddr, run_start * self.page_size, size)
        self.allocations.append(alloc)
        return alloc

    # -- code bindings -------------------------------------------------------

    def bind_code(self, function_name: str, binding: CodeBinding) -> None:
        self.kernel_image.function(function_name)  # existence check
        self.bindings[function_name] = binding

    def unbind_code(self, function_name: str) -> None:
        self.bindings.pop(function_name, None)

    def _binding_for(self, syscall: str) -> CodeBinding | None:
        for name in self.kernel_image.call_closure(syscall):
            binding = self.bindings.get(name)
            if binding is not None:
                return binding
        return None

    # -- workload ------------------------------------------------------------

    def crash(self, reason: str) -> None:
        self.crashed = True
        self.crash_reason = reason

    def require_running(self) -> None:
        if self.crashed:
            raise GuestCrashedError(f"guest crashed: {self.crash_reason}")

    def step(self, dt: float) -> list[SyscallEvent]:
        """Advance the virtual clock, executing the seeded syscall workload.

        Each event runs whatever semantics are currently bound to the bytes
        of its target call chain. A crash stops the remaining events; the
        crashed flag is absorbing.
        """
        self.require_running()
        if dt <= 0:
            raise ValueError("dt must be positive")
        t0, t1 = self.clock, self.clock + dt
        arrivals: list[tuple[float, ProcessActivity]] = []
        for proc in self.processes:
            for start, end, rate in proc.spec.segments_between(t0, t1):
                if rate <= 0:
                    continue
                t = start
                while True:
                    t += self.rng.expovariate(rate)
                    if t >= end:
                        break
                    arrivals.append((t, proc))
        arrivals.sort(key=lambda item: (item[0], item[1].pid))

        events: list[SyscallEvent] = []
        for time, proc in arrivals:
            syscall = proc.draw_target(self.rng)
            if not syscall:
                continue
            self.clock = time
            event = SyscallEvent(time=time, pid=proc.pid, syscall=syscall)
            events.append(event)
            binding = self._binding_for(syscall)
            if binding is not None:
                binding.on_execute(self, event)
            if self.crashed:
                break
        if not self.crashed:
            self.clock = t1
        return events

    def fast_forward(self, to_clock: float) -> None:
        """Hypervisor-side clock jump; the skipped workload is not simulated."""
        self.require_running()
        if to_clock < self.clock:
            raise ValueError("cannot move the clock backwards")
        self.clock = to_clock

    # -- inspection -----------------------------------------------------------

    def memory_diff(self) -> list[tuple[int, int]]:
        """Half-open [start, end) physical ranges differing from the boot image."""
        return diff_ranges(self.pristine_mem, self.phys_mem)

    def describe(self) -> dict:
        return {
            "build_id": self.kernel_image.build_id,
            "seed": self.seed,
            "clock": self.clock,
            "crashed": self.crashed,
            "crash_reason": self.crash_reason,
            "kernel_base": hex(self.kernel_base),
            "page_size": self.page_size,
            "frame_count": self.frame_count,
            "agent_loaded": self.agent_entry is not None,
        }


def boot_guest(config: GuestConfig, seed: int) -> GuestMachine:
    """Instantiate a guest from config; identical (config, seed) pairs give
    bit-identical machines."""
    return GuestMachine(config, seed)


def diff_ranges(before: bytes, after: bytes, chunk: int = 4096) -> list[tuple[int, int]]:
    if len(before) != len(after):
        raise ValueError("images must have equal length")
    ranges: list[tuple[int, int]] = []
    for base in range(0, len(before), chunk):
        if before[base:base + chunk] == after[base:base + chunk]:
            continue
        for i in range(base, min(base + chunk, len(before))):
            if before[i] != after[i]:
                if ranges and ranges[-1][1] == i:
                    ranges[-1] = (ranges[-1][0], i + 1)
                else:
                    ranges.append((i, i + 1))
    return ranges
