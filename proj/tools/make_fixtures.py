#!/usr/bin/env python3
"""Regenerate the bundled fixture datasets under data/fixtures.

Output is deterministic for a given script version; the generated files are
committed so the C++ build never needs Python.
"""
import json
import os
import random

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data", "fixtures")

GENRES = ["Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
          "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical",
          "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western"]
CD_STYLES = ["Jazz", "Rock", "Blues", "Classical", "Pop", "Country", "Folk",
             "Metal", "Soul", "Reggae"]
LABELS = ["Blue Note", "Columbia", "Verve", "Sony", "Atlantic", "Capitol",
          "Motown", "Decca"]


def deal(rng, n_users, n_items, n_inters):
    """Assign n_inters distinct (user, item) pairs, every item used at least once,
    every user receiving n_inters / n_users items."""
    per_user = n_inters // n_users
    assert per_user * n_users == n_inters and n_items <= n_inters
    pool = list(range(n_items)) + [rng.randrange(n_items) for _ in range(n_inters - n_items)]
    rng.shuffle(pool)
    rows = [pool[u * per_user:(u + 1) * per_user] for u in range(n_users)]
    # Repair duplicates inside a row by swapping with a slot in another row.
    for u, row in enumerate(rows):
        for k in range(per_user):
            while row.count(row[k]) > 1:
                v = rng.randrange(n_users)
                j = rng.randrange(per_user)
                a, b = row[k], rows[v][j]
                if v == u or b in row or a in rows[v]:
                    continue
                row[k], rows[v][j] = b, a
    return rows


def write_lines(path, lines):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")


def amazon_subset(name, n_users, n_items, n_inters, seed):
    rng = random.Random(seed)
    rows = deal(rng, n_users, n_items, n_inters)
    out = os.path.join(ROOT, "table1", name)
    reviews = []
    for u, items in enumerate(rows):
        t = 1_100_000_000 + u * 1000
        for k, i in enumerate(items):
            reviews.append(json.dumps({"reviewerID": f"A{u:04d}", "asin": f"B{i:06d}",
                                       "overall": float(rng.choice([4, 5])),
                                       "unixReviewTime": t + k * 60}))
    meta = []
    for i in range(n_items):
        style = CD_STYLES[i % len(CD_STYLES)]
        meta.append(json.dumps({"asin": f"B{i:06d}", "title": f"Album {i}",
                                "categories": [["CDs & Vinyl", style]],
                                "brand": LABELS[i % len(LABELS)]}))
    write_lines(os.path.join(out, "reviews.jsonl"), reviews)
    write_lines(os.path.join(out, "meta.jsonl"), meta)


def movielens_subset(name, n_users, n_items, n_inters, seed):
    rng = random.Random(seed)
    rows = deal(rng, n_users, n_items, n_inters)
    out = os.path.join(ROOT, "table1", name)
    ratings = []
    for u, items in enumerate(rows):
        t = 970_000_000 + u * 10_000
        for k, i in enumerate(items):
            ratings.append(f"{u + 1}::{i + 1}::{rng.choice([4, 5])}::{t + k * 30}")
    movies = [f"{i + 1}::Movie {i + 1} ({1950 + i % 50})::{GENRES[i % len(GENRES)]}"
              for i in range(n_items)]
    users = [f"{u + 1}::{'MF'[u % 2]}::{[18, 25, 35][u % 3]}::{u % 21}::00000"
             for u in range(n_users)]
    write_lines(os.path.join(out, "ratings.dat"), ratings)
    write_lines(os.path.join(out, "movies.dat"), movies)
    write_lines(os.path.join(out, "users.dat"), users)


def ml20(seed=20):
    """20-user MovieLens-style fixture with genre-clustered tastes and mixed ratings."""
    rng = random.Random(seed)
    out = os.path.join(ROOT, "ml20")
    movies = []
    for m in range(1, 81):
        g1 = GENRES[(m - 1) % 8]
        genres = g1 if m % 3 else f"{g1}|{GENRES[(m + 3) % 8]}"
        movies.append((m, f"Film {m} ({1980 + m % 25})", genres))
    users = []
    for u in range(1, 21):
        gender = "MF"[u % 2]
        age = [18, 25, 35, 45][u % 4]
        occ = [0, 4, 7, 12, 17][u % 5]
        users.append(f"{u}::{gender}::{age}::{occ}::{10000 + u}")
    ratings = []
    for u in range(1, 21):
        fav = GENRES[u % 8]
        liked = [m for m, _, g in movies if fav in g.split("|")]
        others = [m for m, _, g in movies if fav not in g.split("|")]
        picks = rng.sample(liked, min(len(liked), 6 + u % 4)) + rng.sample(others, 6 + u % 5)
        rng.shuffle(picks)
        t = 975_000_000 + u * 100_000
        for k, m in enumerate(picks):
            fav_movie = m in liked
            r = rng.choice([4, 5, 5]) if fav_movie else rng.choice([2, 3, 4])
            ratings.append(f"{u}::{m}::{r}::{t + k * 600}")
    write_lines(os.path.join(out, "ratings.dat"), ratings)
    write_lines(os.path.join(out, "movies.dat"), [f"{m}::{t}::{g}" for m, t, g in movies])
    write_lines(os.path.join(out, "users.dat"), users)


def amazon_small(seed=7):
    """Small Amazon-style fixture with co-purchase/co-view links and brands."""
    rng = random.Random(seed)
    out = os.path.join(ROOT, "amazon_small")
    n_items = 30
    meta = []
    for i in range(n_items):
        style = CD_STYLES[i % 5]
        related = {
            "also_bought": [f"C{(i + 1) % n_items:03d}", f"C{(i + 5) % n_items:03d}"],
            "also_viewed": [f"C{(i + 2) % n_items:03d}"],
        }
        if i == 3:
            related["also_bought"].append("C999")  # dangling on purpose
        meta.append(json.dumps({"asin": f"C{i:03d}", "title": f"Record {i}",
                                "categories": [["CDs & Vinyl", style]],
                                "brand": LABELS[i % 4], "price": round(5 + i * 0.75, 2),
                                "description": f"A {style.lower()} record.",
                                "related": related}))
    reviews = []
    for u in range(12):
        items = rng.sample(range(n_items), 6 + u % 4)
        t = 1_200_000_000 + u * 5000
        for k, i in enumerate(items):
            reviews.append(json.dumps({"reviewerID": f"R{u:02d}", "asin": f"C{i:03d}",
                                       "overall": float(rng.choice([2, 4, 5, 5])),
                                       "unixReviewTime": t + k * 100}))
    write_lines(os.path.join(out, "reviews.jsonl"), reviews)
    write_lines(os.path.join(out, "meta.jsonl"), meta)


def main():
    amazon_subset("cds_sparse", 100, 704, 800, 1)
    amazon_subset("cds_dense", 100, 453, 800, 2)
    movielens_subset("ml_sparse", 100, 1880, 5000, 3)
    movielens_subset("ml_dense", 100, 1330, 5000, 4)
    expected = {
        "cds_sparse": {"format": "amazon", "users": 100, "items": 704, "interactions": 800,
                       "inters_per_user": "8.00", "inters_per_item": "1.14", "sparsity": "98.86%"},
        "cds_dense": {"format": "amazon", "users": 100, "items": 453, "interactions": 800,
                      "inters_per_user": "8.00", "inters_per_item": "1.77", "sparsity": "98.23%"},
        "ml_sparse": {"format": "movielens", "users": 100, "items": 1880, "interactions": 5000,
                      "inters_per_user": "50.00", "inters_per_item": "2.66", "sparsity": "97.34%"},
        "ml_dense": {"format": "movielens", "users": 100, "items": 1330, "interactions": 5000,
                     "inters_per_user": "50.00", "inters_per_item": "3.76", "sparsity": "96.24%"},
    }
    with open(os.path.join(ROOT, "table1", "expected.json"), "w") as f:
        json.dump(expected, f, indent=2)
        f.write("\n")
    ml20()
    amazon_small()


if __name__ == "__main__":
    main()
