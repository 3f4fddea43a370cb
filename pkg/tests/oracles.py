"""Independent reference implementations used by the tests."""

from collections import deque


def adjacency(parent):
    adj = {k: set() for k in range(len(parent))}
    for k, p in enumerate(parent):
        if p is not None and p >= 0:
            adj[k].add(p)
            adj[p].add(k)
    return adj


def bfs_distance(adj, src):
    dist = {src: 0}
    todo = deque([src])
    while todo:
        x = todo.popleft()
        for y in adj[x]:
            if y not in dist:
                dist[y] = dist[x] + 1
                todo.append(y)
    return dist


def depth_by_walk(parent, x):
    d = 0
    while parent[x] is not None and parent[x] >= 0:
        x = parent[x]
        d += 1
    return d


def positions_oracle(parent):
    """(path_len, lvl_diff) for all ordered pairs via BFS and parent walks."""
    adj = adjacency(parent)
    n = len(parent)
    out = {}
    for a in range(n):
        dist = bfs_distance(adj, a)
        for b in range(n):
            sign = 1 if a < b else -1 if a > b else 0
            out[a, b] = (sign * dist[b], depth_by_walk(parent, a) - depth_by_walk(parent, b))
    return out


def ancestors(parent, x):
    out = []
    while parent[x] is not None and parent[x] >= 0:
        x = parent[x]
        out.append(x)
    return out
