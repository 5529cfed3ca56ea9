#!/usr/bin/env python3
"""Regenerates crates/core/data/toy_vectors.txt.

Words in the same cluster share a centroid plus seeded noise, so nearest
neighbours stay inside a theme. Output is deterministic for a given seed.
"""
import numpy as np

DIM = 24
SEED = 20240611

CLUSTERS = {
    "outdoors": "park parks garden gardens lake lakes temple trees tree flowers flower walk walking outside out hill hills mountain mountains river fishing fish boat rowing pond bench path scenery xishan 公园 湖 钓鱼 散步 山 鱼",
    "sky": "stars star stargazing sky night moon telescope sunset sunrise evening dark planets 星星 月亮 夜晚",
    "weather": "weather rain raining sunny cloudy cold hot warm wind windy snow temperature forecast umbrella storm spring autumn winter summer 天气 下雨 晴天 冷 热",
    "family": "family grandson granddaughter son daughter wife husband children grandchildren brother sister mother father parents relatives 孙子 女儿 儿子 家人",
    "school": "studies study school homework exam exams teacher university class lessons grades learning students 学习 学校 考试 老师",
    "food": "dumplings noodles rice cook cooking dinner lunch breakfast tea soup market vegetables fruit grapes picking meal kitchen recipe 饺子 做饭 吃饭 茶 葡萄",
    "work": "job jobs work working railway engineer factory office retired retirement colleague colleagues career salary money 工作 铁路 工厂 退休",
    "health": "doctor hospital medicine teeth stroke exercise sleep health pain tired clinic nurse 医生 医院 身体 锻炼",
    "hobbies": "chess music singing opera calligraphy painting reading newspaper television tv programs hobbies hobby dancing photography 下棋 音乐 唱歌 书法 电视",
    "time": "day days yesterday today tomorrow week weekend morning afternoon sunday monday month year ago recently 昨天 今天 明天 周末 早上",
    "social": "friends friend neighbors neighbour visit visiting chat talk party together old company gathering 朋友 邻居 聊天 聚会",
    "travel": "trip travel train bus city village hometown journey visit holiday photos 旅行 火车 家乡",
    "sports": "sports football basketball swimming running badminton tabletennis taichi match team 运动 游泳 太极",
    "faith": "religion church prayer buddhist incense faith worship 宗教 寺庙",
    "motion": "went go going come came see saw look watch watching 去 来 看",
}


def main():
    rng = np.random.default_rng(SEED)
    seen = set()
    lines = ["# toy embedding table: word<TAB>space-separated floats", f"# dim={DIM} seed={SEED}"]
    for name, words in CLUSTERS.items():
        centroid = rng.normal(size=DIM)
        for word in words.split():
            if word in seen:
                continue
            seen.add(word)
            vec = centroid + 0.45 * rng.normal(size=DIM)
            lines.append(word + "\t" + " ".join(f"{x:.6f}" for x in vec))
    with open("crates/core/data/toy_vectors.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(len(seen), "words")


if __name__ == "__main__":
    main()
