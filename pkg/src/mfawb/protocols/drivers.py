"""Honest role logic for every executable protocol.

Each driver computes role values directly with the primitives rather than by
evaluating the fixture's terms, so that term evaluation can be checked
against an independent implementation.
"""

from __future__ import annotations

import random

from .. import primitives as prim
from ..primitives import DecodeFailure, ModGroup, PufDevice, fuzzy_gen, fuzzy_rep, hash_fields, sym_decrypt, \
    sym_encrypt, tag_generate, totp_counter, xor
from .runtime import Deployment, Session

TAG_TABLE_SIZE = 8
TOTP_INTERVAL = 30
GATEWAY_PEERS = 4


class Driver:
    pid = ""

    def register(self, dep: Deployment, rng: random.Random) -> None:
        pass

    def run(self, s: Session) -> None:
        raise NotImplementedError

    @staticmethod
    def H(s: Session, *fields: bytes) -> bytes:
        return hash_fields(*fields, suite=s.suite)


_DRIVERS: dict[str, Driver] = {}


def driver(cls):
    _DRIVERS[cls.pid] = cls()
    return cls


def driver_for(pid: str) -> Driver:
    return _DRIVERS[pid]


# -- P1 ----------------------------------------------------------------------

@driver
class HistoricalDataWoFS(Driver):
    pid = "P1woFS"
    ephemeral = False

    def register(self, dep, rng):
        grp = ModGroup(dep.suite.modulus)
        K = int.from_bytes(dep.values["K"], "big")
        table = []
        for i in range(1, TAG_TABLE_SIZE + 1):
            d_i = dep.values["d_1"] if i == 1 else rng.randbytes(len(dep.values["d_1"]))
            table.append((i, d_i, tag_generate(K, d_i, i, grp, dep.suite)))
        dep.state["tags"] = table
        dep.values["t_1"] = grp.to_bytes(table[0][2])

    def run(self, s):
        H, v = self.H, s.env
        p = s.suite.modulus
        sid = s.nonce("sid")
        out = [v["ID_C"], sid]
        if self.ephemeral:
            x_c = int.from_bytes(s.nonce("x_C"), "big")
            out.append(ModGroup(p).to_bytes(pow(int.from_bytes(v["g"], "big"), x_c, p)))
        got = s.send(0, *out)
        if got is None:
            return s.reject("S", "no hello")
        # server: the client is identified but never authenticated
        if not s.check(0, "S", got[0] == v["ID_C"], "unknown client"):
            return
        Y, auth_p = s.nonce("Y"), s.nonce("Auth_p")
        sk_inputs = [v["mk"], got[1], Y]
        reply = [Y]
        if self.ephemeral:
            x_s = int.from_bytes(s.nonce("x_S"), "big")
            g = int.from_bytes(v["g"], "big")
            reply.append(ModGroup(p).to_bytes(pow(g, x_s, p)))
            sk_inputs.append(ModGroup(p).to_bytes(pow(int.from_bytes(got[2], "big"), x_s, p)))
        reply.append(H(s, v["mk"], Y, got[1], auth_p))
        s.accept("S", H(s, *sk_inputs))
        got = s.send(1, *reply)
        if got is None:
            return s.reject("C", "no reply")
        if not s.check(1, "C", got[-1] == H(s, v["mk"], got[0], sid, auth_p)):
            return
        sk_inputs = [v["mk"], sid, got[0]]
        if self.ephemeral:
            sk_inputs.append(ModGroup(p).to_bytes(pow(int.from_bytes(got[1], "big"), x_c, p)))
        s.accept("C", H(s, *sk_inputs))


@driver
class HistoricalDataFS(HistoricalDataWoFS):
    pid = "P1FS"
    ephemeral = True


# -- P2 ----------------------------------------------------------------------

@driver
class BlockchainIoT(Driver):
    pid = "P2"

    def run(self, s):
        H, v = self.H, s.env
        rpw = H(s, v["ID_i"], v["PW_i"], v["B_i"], v["X_sc"])
        V_1 = s.nonce("V_1")
        got = s.send(0, xor(v["ID_i"], V_1), H(s, rpw, V_1))
        if got is None:
            return s.reject("S", "no request")
        stored = s.deployment.values
        v1 = xor(got[0], stored["ID_i"])
        if not s.check(0, "S", got[1] == H(s, stored["RPW"], v1)):
            return
        M_2 = s.nonce("M_2")
        sk_s = xor(M_2, v1)
        s.accept("S", sk_s)
        got = s.send(1, M_2, H(s, sk_s, stored["RPW"]))
        if got is None:
            return s.reject("U", "no reply")
        sk_u = xor(got[0], V_1)
        if s.check(1, "U", got[1] == H(s, sk_u, rpw)):
            s.accept("U", sk_u)


# -- P3 ----------------------------------------------------------------------

@driver
class LongTermKeyHistory(Driver):
    pid = "P3"

    def run(self, s):
        H, v = self.H, s.env
        grp = ModGroup(s.suite.modulus)
        r2 = s.nonce("r2")
        got = s.send(0, xor(v["mk"], r2))
        if got is None:
            return s.reject("C", "no challenge")
        r2_c = xor(got[0], v["mk"])
        r1, X, tid = s.nonce("r1"), s.nonce("X"), s.nonce("TID_c")
        x = int.from_bytes(X, "big")
        Y = grp.to_bytes(grp.add(x, grp.to_scalar(H(s, r1, r2_c))))
        sk_c = H(s, v["mk"], r1, r2_c, X, tid, v["spk_s"])
        got = s.send(1, tid, xor(v["mk"], r1), Y, H(s, v["mk"], v["hd"], r1, r2_c, X))
        if got is None:
            return s.reject("S", "no response")
        tid_s, R1, Y_s, A_C = got
        r1_s = xor(R1, v["mk"])
        x_s = (int.from_bytes(Y_s, "big") - grp.to_scalar(H(s, r1_s, r2))) % grp.p
        X_s = grp.to_bytes(x_s)
        if not s.check(1, "S", A_C == H(s, v["mk"], v["hd"], r1_s, r2, X_s)):
            return
        sk_s = H(s, v["mk"], r1_s, r2, X_s, tid_s, v["spk_s"])
        s.accept("S", sk_s)
        got = s.send(2, H(s, sk_s, tid_s))
        if got is None:
            return s.reject("C", "no confirmation")
        if s.check(2, "C", got[0] == H(s, sk_c, tid)):
            s.accept("C", sk_c)


# -- P4 ----------------------------------------------------------------------

@driver
class SensorNetwork(Driver):
    pid = "P4"

    def run(self, s):
        H, v = self.H, s.env
        L = s.suite.digest_len
        N_ur, RN = s.nonce("N_ur"), s.nonce("RN_sc")
        ts1 = s.env["TS_1"] = s.timestamp(8)
        hRN = H(s, RN)
        got = s.send(0, v["ID_sn"], N_ur, hRN, ts1, H(s, v["U_rg"], v["ID_ur"], N_ur, hRN, ts1))
        if got is None:
            return s.reject("S", "no request")
        id_sn, n_ur, h_rn, ts1_s, A_U = got
        db = s.deployment.values
        if not s.check(0, "S", s.fresh(ts1_s), "stale TS_1"):
            return
        if not s.check(0, "S", A_U == H(s, db["U_rg"], db["ID_ur"], n_ur, h_rn, ts1_s)):
            return
        ts5 = s.env["TS_5"] = s.timestamp(8)
        k_ss = H(s, db["ID_ur"], id_sn, db["U_rg"], H(s, db["ID_ur"], n_ur), h_rn, ts1_s, ts5)
        l_10 = H(s, xor(db["K_sh"], db["U_rg"])) + db["ID_ur"]
        s.accept("S", k_ss)
        got = s.send(1, ts5, l_10, H(s, k_ss, ts5))
        if got is None:
            return s.reject("U", "no reply")
        ts5_u, l10, A_S = got
        if not s.check(1, "U", s.fresh(ts5_u), "stale TS_5"):
            return
        if not s.check(1, "U", l10[:L] == H(s, xor(v["K_sh"], v["U_rg"])) and l10[L:] == v["ID_ur"]):
            return
        k_u = H(s, v["ID_ur"], v["ID_sn"], v["U_rg"], H(s, v["ID_ur"], N_ur), hRN, ts1, ts5_u)
        if s.check(1, "U", A_S == H(s, k_u, ts5_u)):
            s.accept("U", k_u)


# -- P5 ----------------------------------------------------------------------

@driver
class HealthcareIoT(Driver):
    pid = "P5"

    def run(self, s):
        H, v = self.H, s.env
        N_u = s.nonce("N_u")
        mid = H(s, v["ID_u"], N_u)
        got = s.send(0, mid, v["Id_SN"], H(s, v["sc_v"], mid, v["Id_SN"]))
        if got is None:
            return s.reject("S", "no request")
        mid_s, id_sn, A_U = got
        db = s.deployment.values
        if not s.check(0, "S", A_U == H(s, db["sc_v"], mid_s, id_sn)):
            return
        w_i = H(s, mid_s, db["x_s"])
        s_key = H(s, w_i, mid_s, id_sn)
        s.accept("S", s_key)
        got = s.send(1, xor(w_i, H(s, db["sc_v"], mid_s)), H(s, s_key, db["sc_v"]))
        if got is None:
            return s.reject("U", "no reply")
        w_u = xor(got[0], H(s, v["sc_v"], mid))
        k_u = H(s, w_u, mid, v["Id_SN"])
        if s.check(1, "U", got[1] == H(s, k_u, v["sc_v"])):
            s.accept("U", k_u)


# -- P6 ----------------------------------------------------------------------

@driver
class Telecare(Driver):
    pid = "P6"

    def run(self, s):
        H, v = self.H, s.env
        r2 = s.nonce("R_rand2")
        t1 = s.env["T_1"] = s.timestamp(32)
        hid = H(s, v["PID_i"])
        y_i = H(s, v["SID_j"], hid, r2, t1)
        got = s.send(0, xor(t1, hid), xor(r2, v["ID_i"]), H(s, y_i, v["sc_k"], t1))
        if got is None:
            return s.reject("S", "no request")
        db = s.deployment.values
        hid_s = H(s, db["PID_i"])
        t1_s = xor(got[0], hid_s)
        if not s.check(0, "S", s.fresh(t1_s), "stale T_1"):
            return
        r2_s = xor(got[1], db["ID_i"])
        y_rc = H(s, db["SID_j"], hid_s, r2_s, t1_s)
        if not s.check(0, "S", got[2] == H(s, y_rc, db["sc_k"], t1_s)):
            return
        t3 = s.env["T_3"] = s.timestamp(8)
        sk = H(s, y_rc, db["SID_j"], t3)
        s.accept("S", sk)
        got = s.send(1, db["SID_j"], t3, H(s, sk, t3))
        if got is None:
            return s.reject("U", "no reply")
        sid_j, t3_u, A_S = got
        if not s.check(1, "U", s.fresh(t3_u), "stale T_3"):
            return
        sk_u = H(s, y_i, sid_j, t3_u)
        if s.check(1, "U", A_S == H(s, sk_u, t3_u)):
            s.accept("U", sk_u)


# -- P7 ----------------------------------------------------------------------

@driver
class TotpPuf(Driver):
    pid = "P7"

    def register(self, dep, rng):
        puf = PufDevice("client-puf", rng.randbytes(32), dep.suite.puf_noise_bits)
        dep.state["puf"] = puf
        dep.state["t0"] = dep.clock - rng.randrange(0, 10 ** 6)
        helpers = []
        sigmas = []
        for c in ("c_1", "c_2"):
            pair = fuzzy_gen(puf.ideal_response(dep.values[c], dep.suite), rng, dep.suite)
            helpers.append(pair.tau)
            sigmas.append(pair.sigma)
        dep.state["helpers"] = tuple(helpers)
        dep.values["k_2"] = hash_fields(*sigmas, suite=dep.suite)

    def client_k2(self, s: Session) -> bytes:
        puf, helpers = s.deployment.state["puf"], s.deployment.state["helpers"]
        sigmas = [fuzzy_rep(puf.response(s.env[c], s.rng, s.suite), tau, s.suite)
                  for c, tau in zip(("c_1", "c_2"), helpers)]
        return hash_fields(*sigmas, suite=s.suite)

    def counter(self, s: Session, offset: int = 0) -> bytes:
        return (totp_counter(s.now(), s.deployment.state["t0"], TOTP_INTERVAL) + offset).to_bytes(8, "big")

    def run(self, s):
        H, v = self.H, s.env
        r = s.nonce("r")
        ctr = s.env["CTR"] = self.counter(s)
        k_2 = s.env["k_2"] = self.client_k2(s)
        got = s.send(0, xor(H(s, v["k_1"], ctr), r), H(s, xor(k_2, r), ctr), v["c_1"], v["c_2"])
        if got is None:
            return s.reject("S", "no request")
        server = getattr(s.channel, "server", None) or self.serve
        reply = server(s, got)
        if reply is None:
            return s.reject("C", "server silent")
        ack = s.send(1, *reply)
        if ack is None:
            return s.reject("C", "no acknowledgement")
        # the client performs no check on the server's reply
        s.accept("C", r)

    def serve(self, s: Session, got) -> tuple[bytes, ...] | None:
        H, db = self.H, s.deployment.values
        M_1, M_2 = got[0], got[1]
        for drift in (0, -1):
            ctr = self.counter(s, drift)
            r_s = xor(M_1, H(s, db["k_1"], ctr))
            if M_2 == H(s, xor(db["k_2"], r_s), ctr):
                s.check(0, "S", True)
                s.accept("S", r_s)
                return (s.env["ACK"],)
        s.check(0, "S", False)
        return None


# -- P8 ----------------------------------------------------------------------

@driver
class RemoteUserIoT(Driver):
    pid = "P8"

    def gateway_hello(self, s: Session, got) -> tuple[bytes, ...] | None:
        """Gateway handling of the user's first message; returns the reply values."""
        H, db, suite = self.H, s.deployment.values, s.suite
        id_u, c_u, t1_g = got
        if not s.check(0, "G", s.fresh(t1_g) and id_u == db["ID_U"], "stale or unknown"):
            return None
        try:
            body = sym_decrypt(db["K_X"], c_u, suite)
        except prim.AuthenticationFailure:
            s.check(0, "G", False, "bad ciphertext")
            return None
        L = suite.digest_len
        h_g, r_u = body[:L], body[L:]
        if not s.check(0, "G", h_g == db["H_U"]):
            return None
        R_G = s.nonce("R_G")
        t2 = s.env["T_2"] = s.timestamp(8)
        s.deployment.state["gateway_session"] = (id_u, r_u, R_G, t2)
        return sym_encrypt(db["K_X"], R_G + H(s, h_g, r_u, R_G, t2), suite=suite), t2

    def gateway_confirm(self, s: Session, got) -> None:
        H, db = self.H, s.deployment.values
        id_u, r_u, R_G, t2 = s.deployment.state.pop("gateway_session")
        sk_g = H(s, id_u, r_u, R_G)
        if s.check(2, "G", got[0] == H(s, sk_g, db["H_U"], t2)):
            s.accept("G", sk_g)

    def run(self, s):
        H, v, suite = self.H, s.env, s.suite
        R_U = s.nonce("R_U")
        t1 = s.env["T_1"] = s.timestamp(8)
        h_u = H(s, v["ID_U"], v["PW_U"], v["B_U"])
        got = s.send(0, v["ID_U"], sym_encrypt(v["K_X"], h_u + R_U, suite=suite), t1)
        if got is None:
            return s.reject("G", "no request")
        reply = self.gateway_hello(s, got)
        if reply is None:
            return
        got = s.send(1, *reply)
        if got is None:
            return s.reject("U", "no reply")
        c_g, t2_u = got
        if not s.check(1, "U", s.fresh(t2_u), "stale T_2"):
            return
        try:
            body = sym_decrypt(v["K_X"], c_g, suite)
        except prim.AuthenticationFailure:
            s.check(1, "U", False, "bad ciphertext")
            return
        r_g, v_g_u = body[:len(R_U)], body[len(R_U):]
        if not s.check(1, "U", v_g_u == H(s, h_u, R_U, r_g, t2_u)):
            return
        sk_u = H(s, v["ID_U"], R_U, r_g)
        s.accept("U", sk_u)
        got = s.send(2, H(s, sk_u, h_u, t2_u))
        if got is None:
            return s.reject("G", "no confirmation")
        self.gateway_confirm(s, got)


# -- P10 ---------------------------------------------------------------------

@driver
class ChannelFingerprint(Driver):
    pid = "P10"

    def register(self, dep, rng):
        puf = PufDevice("device-puf", rng.randbytes(32), 0)
        dep.values["ID_s"] = hash_fields(puf.ideal_response(b"ssid", dep.suite), suite=dep.suite)
        peers = [rng.randbytes(len(dep.values["ID_s"])) for _ in range(GATEWAY_PEERS - 1)]
        peers.insert(rng.randrange(GATEWAY_PEERS), dep.values["ID_s"])
        dep.state["gateway_ids"] = tuple(peers)

    @staticmethod
    def identify(suite, ids, M_1: bytes, M_2: bytes, ts_a: bytes, reading: bytes):
        """Try each known ID_s; only the right one yields a decodable helper string."""
        for id_s in ids:
            r_a = xor(M_1, hash_fields(id_s, ts_a, suite=suite))
            tau = xor(M_2, r_a)
            try:
                return id_s, r_a, tau, fuzzy_rep(reading, tau, suite)
            except DecodeFailure:
                continue
        return None

    def run(self, s):
        H, v = self.H, s.env
        fp = s.deployment.values["N0"]
        w_d = s.channel.reading("D", fp, s)
        w_g = s.channel.reading("G", fp, s)
        pair = fuzzy_gen(w_d, s.rng, s.suite)
        s.env["N0"], s.env["CW"] = w_d, xor(w_d, pair.tau)
        R_A = s.nonce("R_A")
        ts_a = s.env["TS_A"] = s.timestamp(8)
        got = s.send(0, xor(H(s, v["ID_s"], ts_a), R_A), xor(R_A, pair.tau), ts_a)
        if got is None:
            return s.reject("G", "no request")
        if not s.check(0, "G", s.fresh(got[2]), "stale TS_A"):
            return
        found = self.identify(s.suite, s.deployment.state["gateway_ids"], got[0], got[1], got[2], w_g)
        if not s.check(0, "G", found is not None, "no matching device"):
            return
        id_s, r_a, _, sigma_g = found
        R_B = s.nonce("R_B")
        ts_b = s.env["TS_B"] = s.timestamp(8)
        sk_g = H(s, id_s, got[2], ts_b, r_a, R_B, sigma_g)
        got2 = s.send(1, xor(H(s, id_s, ts_b, got[2], r_a), R_B), H(s, prim.xor_all((sk_g, r_a, R_B), len(sk_g))),
                      ts_b)
        if got2 is None:
            return s.reject("D", "no reply")
        m4, m5, ts_b_d = got2
        if not s.check(1, "D", s.fresh(ts_b_d), "stale TS_B"):
            return
        r_b = xor(m4, H(s, v["ID_s"], ts_b_d, ts_a, R_A))
        sk_d = H(s, v["ID_s"], ts_a, ts_b_d, R_A, r_b, pair.sigma)
        if not s.check(1, "D", m5 == H(s, prim.xor_all((sk_d, R_A, r_b), len(sk_d)))):
            return
        s.accept("D", sk_d)
        ts_ap = s.env["TS_Ap"] = s.timestamp(8)
        got3 = s.send(2, H(s, sk_d, v["ID_s"]), ts_ap)
        if got3 is None:
            return s.reject("G", "no confirmation")
        if not s.check(2, "G", s.fresh(got3[1]), "stale TS_A'"):
            return
        if s.check(2, "G", got3[0] == H(s, sk_g, id_s)):
            s.accept("G", sk_g)


# -- hardened reference ------------------------------------------------------

@driver
class Hardened(Driver):
    pid = "HARDENED"

    def register(self, dep, rng):
        v = dep.values
        r_gw = rng.randbytes(32)
        tid = hash_fields(v["ID_i"], v["K_GW"], r_gw, suite=dep.suite)
        dep.state["card_tid"] = (tid, r_gw)
        pwv = hash_fields(v["ID_i"], v["PW_i"], suite=dep.suite)
        bv = hash_fields(v["ID_i"], v["B_i"], suite=dep.suite)
        dep.state["gateway"] = {tid: (v["ID_i"], v["S_i1"], pwv, bv, r_gw)}

    def run(self, s):
        H, v, dep = self.H, s.env, s.deployment
        grp = ModGroup(s.suite.modulus)
        g = int.from_bytes(v["g"], "big")
        tid, r_gw = dep.state["card_tid"]
        s.env["R_GW"] = r_gw
        a = int.from_bytes(s.nonce("a"), "big")
        B_3 = grp.to_bytes(pow(g, a, grp.p))
        C_1, N_1 = s.nonce("C_1"), s.nonce("N_1")
        S = v["S_i1"]
        pid = xor(v["ID_i"] + C_1, H(s, S, B_3))
        pwv, bv = H(s, v["ID_i"], v["PW_i"]), H(s, v["ID_i"], v["B_i"])
        got = s.send(0, tid, pid, B_3, xor(N_1, H(s, S, B_3, tid)), H(s, S, pwv, bv, N_1, B_3, tid))
        if got is None:
            return s.reject("G", "no request")
        tid_g, pid_g, b3_g, mn1_g, m1_g = got
        record = dep.state["gateway"].get(tid_g)
        if not s.check(0, "G", record is not None, "unknown pseudo identity"):
            return
        id_g, S_g, pwv_g, bv_g, _ = record
        plain = xor(pid_g, H(s, S_g, b3_g))
        n1_g = xor(mn1_g, H(s, S_g, b3_g, tid_g))
        if not s.check(0, "G", plain[:len(id_g)] == id_g and m1_g == H(s, S_g, pwv_g, bv_g, n1_g, b3_g, tid_g)):
            return
        b = int.from_bytes(s.nonce("b"), "big")
        N_2, N_3, r_new = s.nonce("N_2"), s.nonce("N_3"), s.nonce("R_GWn")
        G_B = grp.to_bytes(pow(g, b, grp.p))
        dh_g = grp.to_bytes(pow(int.from_bytes(b3_g, "big"), b, grp.p))
        sk_g = H(s, H(s, N_2, H(s, id_g, S_g)), N_3, n1_g, dh_g)
        tid_new = H(s, id_g, v["K_GW"], r_new)
        got = s.send(1, G_B, xor(N_2 + N_3, H(s, S_g, n1_g, G_B)), xor(tid_new, H(s, S_g, n1_g, N_2, N_3)),
                     H(s, sk_g, S_g, tid_new, N_2))
        if got is None:
            return s.reject("U", "no reply")
        gb_u, mn_u, mt_u, gm5_u = got
        n23 = xor(mn_u, H(s, S, N_1, gb_u))
        n2_u, n3_u = n23[:len(N_2)], n23[len(N_2):]
        tid_u = xor(mt_u, H(s, S, N_1, n2_u, n3_u))
        dh_u = grp.to_bytes(pow(int.from_bytes(gb_u, "big"), a, grp.p))
        sk_u = H(s, H(s, n2_u, H(s, v["ID_i"], S)), n3_u, N_1, dh_u)
        if not s.check(1, "U", gm5_u == H(s, sk_u, S, tid_u, n2_u)):
            return
        dep.state["card_tid"] = (tid_u, r_new)
        s.accept("U", sk_u)
        got = s.send(2, H(s, sk_u, S, n3_u))
        if got is None:
            return s.reject("G", "no confirmation")
        if s.check(2, "G", got[0] == H(s, sk_g, S_g, N_3)):
            table = dict(dep.state["gateway"])
            del table[tid_g]
            table[tid_new] = (id_g, S_g, pwv_g, bv_g, r_new)
            dep.state["gateway"] = table
            s.accept("G", sk_g)
