# Generated by Django 5.0 on 2026-10-19 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('strategy', models.CharField(db_index=True, max_length=64)),
                ('preset', models.CharField(default='rock', max_length=32)),
                ('scene_seed', models.IntegerField(default=0)),
                ('seed', models.IntegerField(default=0)),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('processing', 'Processing'), ('completed', 'Completed'), ('failed', 'Failed')], db_index=True, default='pending', max_length=20)),
                ('output_dir', models.CharField(max_length=512)),
                ('forest_path', models.CharField(blank=True, default='', max_length=512)),
                ('metrics', models.JSONField(blank=True, null=True)),
                ('error_message', models.TextField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True, db_index=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('processed_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'db_table': 'simulation_runs',
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['strategy', 'seed'], name='simulation_strategy_seed_idx')],
            },
        ),
    ]
